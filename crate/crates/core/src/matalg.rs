//! Exact 2×2 matrix algebra.
//!
//! A real matrix `M` acting on `z = x₁ + i x₂` is identified with the pair
//! `(a₊, a₋)` of complex numbers through `M z = a₊ z + a₋ z̄`. In these
//! coordinates the operator norm and the determinant have closed forms
//!
//! ```text
//! |M| = |a₊| + |a₋|        det M = |a₊|² − |a₋|²
//! ```
//!
//! which is what every singular-value computation in this crate uses.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold on `det(Y + Id)` below which [`cayley_map`] refuses the input.
pub const CAYLEY_DET_FLOOR: f64 = 1e-14;

/// A real 2×2 matrix, row-major: `[[m11, m12], [m21, m22]]`.
///
/// As a gradient, row `i` holds the partial derivatives of component `i`,
/// so `m12 = ∂₂f₁` and `m21 = ∂₁f₂`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    /// The conjugation `z ↦ z̄`, `diag(1, −1)`.
    pub const CONJUGATION: Mat2 = Mat2::new(1.0, 0.0, 0.0, -1.0);

    pub const fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Mat2 { m11, m12, m21, m22 }
    }

    pub const fn diag(a: f64, b: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, b)
    }

    pub fn scalar(t: f64) -> Self {
        Mat2::diag(t, t)
    }

    /// Counter-clockwise rotation by `theta`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Self {
        Mat2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn to_rows(self) -> [[f64; 2]; 2] {
        [[self.m11, self.m12], [self.m21, self.m22]]
    }

    pub fn det(self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn trace(self) -> f64 {
        self.m11 + self.m22
    }

    pub fn transpose(self) -> Self {
        Mat2::new(self.m11, self.m21, self.m12, self.m22)
    }

    /// `(M + Mᵀ)/2`.
    pub fn sym_part(self) -> Self {
        let off = 0.5 * (self.m12 + self.m21);
        Mat2::new(self.m11, off, off, self.m22)
    }

    /// Largest absolute entry of `M − Mᵀ`.
    pub fn asymmetry(self) -> f64 {
        (self.m12 - self.m21).abs()
    }

    pub fn is_symmetric(self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    pub fn frobenius(self) -> f64 {
        (self.m11 * self.m11 + self.m12 * self.m12 + self.m21 * self.m21 + self.m22 * self.m22)
            .sqrt()
    }

    pub fn max_abs(self) -> f64 {
        self.m11
            .abs()
            .max(self.m12.abs())
            .max(self.m21.abs())
            .max(self.m22.abs())
    }

    pub fn is_finite(self) -> bool {
        self.m11.is_finite() && self.m12.is_finite() && self.m21.is_finite() && self.m22.is_finite()
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m11 * v[0] + self.m12 * v[1],
            self.m21 * v[0] + self.m22 * v[1],
        ]
    }

    pub fn norm(self) -> f64 {
        operator_norm(self)
    }

    pub fn cof(self) -> Self {
        cofactor(self)
    }

    pub fn conformal(self) -> ConformalCoords {
        to_conformal(self)
    }

    /// Inverse via the adjugate; `None` when `|det| < floor`.
    pub fn inverse(self, floor: f64) -> Option<Self> {
        let d = self.det();
        if d.abs() < floor {
            return None;
        }
        Some(self.cof() * (1.0 / d))
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m11 + o.m11,
            self.m12 + o.m12,
            self.m21 + o.m21,
            self.m22 + o.m22,
        )
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m11 - o.m11,
            self.m12 - o.m12,
            self.m21 - o.m21,
            self.m22 - o.m22,
        )
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2::new(-self.m11, -self.m12, -self.m21, -self.m22)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.m11 * o.m11 + self.m12 * o.m21,
            self.m11 * o.m12 + self.m12 * o.m22,
            self.m21 * o.m11 + self.m22 * o.m21,
            self.m21 * o.m12 + self.m22 * o.m22,
        )
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }
}

impl Mul<Mat2> for f64 {
    type Output = Mat2;
    fn mul(self, m: Mat2) -> Mat2 {
        m * self
    }
}

/// Conformal (`a_plus = ∂z`) and anticonformal (`a_minus = ∂z̄`) parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformalCoords {
    pub a_plus: Complex64,
    pub a_minus: Complex64,
}

impl ConformalCoords {
    pub fn new(a_plus: Complex64, a_minus: Complex64) -> Self {
        ConformalCoords { a_plus, a_minus }
    }

    pub fn to_mat(self) -> Mat2 {
        from_conformal(self)
    }

    pub fn norm(self) -> f64 {
        self.a_plus.norm() + self.a_minus.norm()
    }

    pub fn det(self) -> f64 {
        self.a_plus.norm_sqr() - self.a_minus.norm_sqr()
    }
}

/// Eigen-decomposition of a symmetric matrix: `R(θ)·diag(lam1, lam2)·R(θ)ᵀ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymSpectrum {
    pub lam1: f64,
    pub lam2: f64,
    /// Angle of the `lam1` eigenvector, in `[0, π)`.
    pub theta: f64,
}

impl SymSpectrum {
    pub fn reconstruct(&self) -> Mat2 {
        let r = Mat2::rotation(self.theta);
        r * Mat2::diag(self.lam1, self.lam2) * r.transpose()
    }
}

/// Largest singular value.
pub fn operator_norm(m: Mat2) -> f64 {
    to_conformal(m).norm()
}

/// `cof(M)`, normalised so that `M·cof(M) = cof(M)·M = det(M)·Id` for every `M`.
///
/// Entry `(i, j)` is `(−1)^{i+j}` times the minor obtained by deleting row `j`
/// and column `i`. For symmetric `M` the two minor orderings coincide.
pub fn cofactor(m: Mat2) -> Mat2 {
    Mat2::new(m.m22, -m.m12, -m.m21, m.m11)
}

pub fn to_conformal(m: Mat2) -> ConformalCoords {
    ConformalCoords {
        a_plus: Complex64::new(0.5 * (m.m11 + m.m22), 0.5 * (m.m21 - m.m12)),
        a_minus: Complex64::new(0.5 * (m.m11 - m.m22), 0.5 * (m.m21 + m.m12)),
    }
}

pub fn from_conformal(c: ConformalCoords) -> Mat2 {
    let (p, q) = (c.a_plus, c.a_minus);
    Mat2::new(p.re + q.re, q.im - p.im, p.im + q.im, p.re - q.re)
}

/// Closed-form spectrum of the symmetric part of `m`.
///
/// `θ = ½·atan2(2m₁₂, m₁₁ − m₂₂)` puts the larger eigenvalue first; the tie
/// `m₁₁ = m₂₂, m₁₂ = 0` resolves to `θ = 0`.
pub fn sym_eigen(m: Mat2) -> SymSpectrum {
    let s = m.sym_part();
    let (a, b, c) = (s.m11, s.m12, s.m22);
    let mut theta = 0.5 * (2.0 * b).atan2(a - c);
    let mean = 0.5 * (a + c);
    let rad = (0.5 * (a - c)).hypot(b);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta -= PI;
    }
    SymSpectrum {
        lam1: mean + rad,
        lam2: mean - rad,
        theta,
    }
}

/// `X = (Y − Id)(Y + Id)⁻¹` for symmetric `Y`, inverting `Y + Id` by its cofactor.
pub fn cayley_map(y: Mat2) -> Result<Mat2> {
    let scale = 1.0 + y.max_abs();
    if !y.is_symmetric(1e-12 * scale) {
        return Err(Error::Degenerate(format!(
            "cayley_map expects a symmetric matrix, asymmetry {:e}",
            y.asymmetry()
        )));
    }
    let yp = y + Mat2::IDENTITY;
    let d = yp.det();
    if d.abs() < CAYLEY_DET_FLOOR {
        return Err(Error::Degenerate(format!("det(Y + Id) = {d:e}")));
    }
    Ok((y - Mat2::IDENTITY) * cofactor(yp) * (1.0 / d))
}
