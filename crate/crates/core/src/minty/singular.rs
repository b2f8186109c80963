//! The singular gradients `𝒮 = {R A₀ R⁻¹ : R ∈ SO(2)}`, the admissible set
//! `𝒜`, and the comparability constants linking `dist(Du, 𝒮)` to `|D²φ|`.

use serde::{Deserialize, Serialize};

use crate::gamma::{envelope_member, golden_min, GammaSpec};
use crate::matalg::{cayley_map, sym_eigen, to_conformal, Mat2};

/// `A₀ = diag(1, −1)`.
pub const A0: Mat2 = Mat2::CONJUGATION;
/// Asymmetry allowed by `admissible_check`.
pub const SYMMETRY_TOL: f64 = 1e-8;
/// Number of `Y` samples behind [`ComparabilityBounds::sweep`].
pub const SWEEP_POINTS: usize = 1_000_000;
/// Relative slack on the comparability bounds.
pub const COMPARABILITY_SLACK: f64 = 0.05;

const SWEEP_ANGLES: usize = 4096;
const GOLDEN_ITERS: usize = 60;
/// Largest eigenvalue ratio `λ₁/λ₂` in the comparability sweep.
const SWEEP_MAX_RATIO: f64 = 1e8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SingularSet;

impl SingularSet {
    /// `R_θ A₀ R_θ⁻¹`, the reflection across the line at angle `θ`.
    pub fn member(theta: f64) -> Mat2 {
        let (s, c) = (2.0 * theta).sin_cos();
        Mat2::new(c, s, s, -c)
    }

    pub fn distance(x: Mat2) -> f64 {
        dist_to_singular(x)
    }

    /// The member closest to `x` in operator norm.
    pub fn nearest(x: Mat2) -> Mat2 {
        let a = to_conformal(x).a_minus;
        let theta = if a.norm() > 0.0 { 0.5 * a.arg() } else { 0.0 };
        Self::member(theta)
    }
}

/// `dist(X, 𝒮)` in operator norm. Symmetric `X` is diagonalised with ordered
/// eigenvalues `x₁ ≥ x₂`, giving `max(|x₁ − 1|, |x₂ + 1|)`; otherwise
/// `|a₊| + ||a₋| − 1|` in Wirtinger coordinates, since `𝒮` is exactly
/// `{a₊ = 0, |a₋| = 1}`.
pub fn dist_to_singular(x: Mat2) -> f64 {
    let scale = 1.0 + x.max_abs();
    if x.is_symmetric(1e-14 * scale) {
        let s = sym_eigen(x.sym_part());
        (s.lam1 - 1.0).abs().max((s.lam2 + 1.0).abs())
    } else {
        let c = to_conformal(x);
        c.a_plus.norm() + (c.a_minus.norm() - 1.0).abs()
    }
}

/// `min_θ |X − R_θ A₀ R_θ⁻¹|` by an angle sweep refined with golden sections.
pub fn dist_to_singular_sweep(x: Mat2) -> f64 {
    let f = |t: f64| (x - SingularSet::member(t)).norm();
    let step = std::f64::consts::PI / SWEEP_ANGLES as f64;
    let best = (0..SWEEP_ANGLES)
        .map(|i| (i, f(i as f64 * step)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let t0 = best.0 as f64 * step;
    golden_min(f, t0 - step, t0 + step, GOLDEN_ITERS).1.min(best.1)
}

fn k_small(lambda: f64) -> f64 {
    (lambda - 1.0) / (lambda + 1.0)
}

/// Membership in `𝒜 = {A ∈ Sym(2) : |A| ≤ 1, |tr A| ≤ k(1 + det A)}`,
/// `k = (λ−1)/(λ+1)`, with asymmetry up to [`SYMMETRY_TOL`] accepted and the
/// conditions evaluated on the symmetric part.
pub fn admissible_check(a: Mat2, lambda: f64) -> bool {
    if a.asymmetry() > SYMMETRY_TOL {
        return false;
    }
    let s = a.sym_part();
    s.norm() <= 1.0 && s.trace().abs() <= k_small(lambda) * (1.0 + s.det())
}

/// How far the symmetric part of `a` is from `𝒜`: the largest violation of
/// `|A| ≤ 1` and `|tr A| ≤ k(1 + det A)`, or `0` inside.
pub fn admissible_defect(a: Mat2, lambda: f64) -> f64 {
    let s = a.sym_part();
    let norm = s.norm() - 1.0;
    let trace = s.trace().abs() - k_small(lambda) * (1.0 + s.det());
    norm.max(trace).max(0.0)
}

/// `A₀·A ∈ 𝓔_{SO(2)}` with `K = λ`, and `|A| ≤ 1`.
pub fn envelope_inclusion_check(a: Mat2, lambda: f64) -> bool {
    let Ok(so2) = GammaSpec::so2(lambda) else {
        return false;
    };
    a.norm() <= 1.0 && envelope_member(A0 * a, &so2).member
}

/// `dist(cayley(Y), 𝒮)·|Y|` for symmetric positive `Y`.
pub fn comparability_ratio(y: Mat2) -> Option<f64> {
    cayley_map(y).ok().map(|x| dist_to_singular(x) * y.norm())
}

/// Range of [`comparability_ratio`] over `{Y ∈ Sym⁺(2) : λ⁻¹ ≤ det Y ≤ λ}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityBounds {
    pub lambda: f64,
    pub c_lo: f64,
    pub c_hi: f64,
    pub samples: usize,
}

impl ComparabilityBounds {
    /// Sweeps `n` matrices `Y = R diag(λ₁, λ₂) Rᵀ` on a log-uniform lattice of
    /// determinants in `[λ⁻¹, λ]` and eigenvalue ratios in `[1, 10⁸]`, with
    /// rotation angles cycling through the lattice.
    pub fn sweep(lambda: f64, n: usize) -> Self {
        let side = (n as f64).sqrt().ceil().max(2.0) as usize;
        let (ld_lo, ld_hi) = (-lambda.ln(), lambda.ln());
        let lr_hi = SWEEP_MAX_RATIO.ln();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..side {
            let det = (ld_lo + (ld_hi - ld_lo) * i as f64 / (side - 1) as f64).exp();
            for j in 0..side {
                let ratio = (lr_hi * j as f64 / (side - 1) as f64).exp();
                let l1 = (det * ratio).sqrt();
                let l2 = det / l1;
                let r = Mat2::rotation((i * side + j) as f64 * 0.618_033_988_749_895);
                let y = (r * Mat2::diag(l1, l2) * r.transpose()).sym_part();
                if let Some(v) = comparability_ratio(y) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        ComparabilityBounds {
            lambda,
            c_lo: lo,
            c_hi: hi,
            samples: side * side,
        }
    }

    /// `[c_lo(1 − slack), c_hi(1 + slack)]`.
    pub fn contains(&self, r: f64, slack: f64) -> bool {
        r >= self.c_lo * (1.0 - slack) && r <= self.c_hi * (1.0 + slack)
    }
}
