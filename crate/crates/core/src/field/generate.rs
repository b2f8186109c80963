use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Field, Grid2, VectorField};
use crate::error::{Error, Result};
use crate::matalg::{from_conformal, ConformalCoords, Mat2};

/// Closed-form maps `ℝ² → ℝ²` used as synthetic inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// `x ↦ A x + b`.
    Affine { a: Mat2, b: [f64; 2] },
    /// `z ↦ Σ c_k z^k`, coefficients as `[re, im]`.
    HolomorphicPoly { coeffs: Vec<[f64; 2]> },
    /// `z ↦ z^k`.
    PowerMap { k: u32 },
    /// `x ↦ ρ(|x|) x/|x|`.
    Radial { profile: RadialProfile },
    /// `x ↦ R(θ) x + amplitude·(x₁², 0)`.
    PerturbedRotation { theta: f64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RadialProfile {
    /// `ρ(r) = scale · r^exponent`.
    Power { exponent: f64, scale: f64 },
}

impl RadialProfile {
    fn eval(&self, r: f64) -> (f64, f64) {
        match *self {
            RadialProfile::Power { exponent, scale } => (
                scale * r.powf(exponent),
                scale * exponent * r.powf(exponent - 1.0),
            ),
        }
    }
}

const KNOWN_KINDS: [&str; 5] = [
    "affine",
    "holomorphic_poly",
    "power_map",
    "radial",
    "perturbed_rotation",
];

impl FieldKind {
    /// Parses a `{"kind": ..., ...}` object, reporting unknown kinds by name.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| Error::UnknownKind("<missing>".into()))?;
        if !KNOWN_KINDS.contains(&kind) {
            return Err(Error::UnknownKind(kind.to_string()));
        }
        Ok(serde_json::from_value(value.clone())?)
    }

    fn holomorphic(z: Complex64, coeffs: &[Complex64]) -> (Complex64, Complex64) {
        // Horner for value and derivative together.
        let mut v = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for c in coeffs.iter().rev() {
            d = d * z + v;
            v = v * z + c;
        }
        (v, d)
    }

    fn coefficients(&self) -> Option<Vec<Complex64>> {
        match self {
            FieldKind::HolomorphicPoly { coeffs } => {
                Some(coeffs.iter().map(|c| Complex64::new(c[0], c[1])).collect())
            }
            FieldKind::PowerMap { k } => {
                let mut c = vec![Complex64::new(0.0, 0.0); *k as usize + 1];
                c[*k as usize] = Complex64::new(1.0, 0.0);
                Some(c)
            }
            _ => None,
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 2] {
        match self {
            FieldKind::Affine { a, b } => {
                let v = a.apply(p);
                [v[0] + b[0], v[1] + b[1]]
            }
            FieldKind::HolomorphicPoly { .. } | FieldKind::PowerMap { .. } => {
                let coeffs = self.coefficients().unwrap_or_default();
                let (v, _) = Self::holomorphic(Complex64::new(p[0], p[1]), &coeffs);
                [v.re, v.im]
            }
            FieldKind::Radial { profile } => {
                let r = p[0].hypot(p[1]);
                if r == 0.0 {
                    return [0.0, 0.0];
                }
                let (rho, _) = profile.eval(r);
                [rho * p[0] / r, rho * p[1] / r]
            }
            FieldKind::PerturbedRotation { theta, amplitude } => {
                let v = Mat2::rotation(*theta).apply(p);
                [v[0] + amplitude * p[0] * p[0], v[1]]
            }
        }
    }

    /// Analytic gradient.
    pub fn gradient(&self, p: [f64; 2]) -> Mat2 {
        match self {
            FieldKind::Affine { a, .. } => *a,
            FieldKind::HolomorphicPoly { .. } | FieldKind::PowerMap { .. } => {
                let coeffs = self.coefficients().unwrap_or_default();
                let (_, d) = Self::holomorphic(Complex64::new(p[0], p[1]), &coeffs);
                from_conformal(ConformalCoords::new(d, Complex64::new(0.0, 0.0)))
            }
            FieldKind::Radial { profile } => {
                let r = p[0].hypot(p[1]);
                if r == 0.0 {
                    let (_, d) = profile.eval(1e-300);
                    return Mat2::scalar(if d.is_finite() { d } else { f64::NAN });
                }
                let (rho, drho) = profile.eval(r);
                let n = [p[0] / r, p[1] / r];
                let nn = Mat2::new(n[0] * n[0], n[0] * n[1], n[1] * n[0], n[1] * n[1]);
                nn * drho + (Mat2::IDENTITY - nn) * (rho / r)
            }
            FieldKind::PerturbedRotation { theta, amplitude } => {
                Mat2::rotation(*theta) + Mat2::diag(2.0 * amplitude * p[0], 0.0)
            }
        }
    }
}

/// Samples the closed-form map at the masked cell centres.
pub fn generate_test_field(kind: &FieldKind, grid: &Grid2) -> VectorField {
    Field::from_fn(grid, |p| kind.eval(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::finite_diff_gradient;
    use crate::matalg::to_conformal;

    #[test]
    fn identity_affine() {
        let g = Grid2::square(-1.0, 1.0, 0.25);
        let kind = FieldKind::Affine {
            a: Mat2::IDENTITY,
            b: [0.0, 0.0],
        };
        let u = generate_test_field(&kind, &g);
        for k in u.active_indices() {
            assert_eq!(u.values[k], g.center(k));
        }
    }

    #[test]
    fn z_squared() {
        let kind = FieldKind::PowerMap { k: 2 };
        let p = [0.3, -0.7];
        let v = kind.eval(p);
        assert!((v[0] - (0.09 - 0.49)).abs() < 1e-15);
        assert!((v[1] - 2.0 * 0.3 * -0.7).abs() < 1e-15);
        let c = to_conformal(kind.gradient(p));
        assert!(c.a_minus.norm() < 1e-15);
        assert!((c.a_plus - Complex64::new(0.6, -1.4)).norm() < 1e-15);
    }

    #[test]
    fn unperturbed_rotation_is_identity() {
        let kind = FieldKind::PerturbedRotation {
            theta: 0.0,
            amplitude: 0.0,
        };
        assert_eq!(kind.eval([0.25, -0.5]), [0.25, -0.5]);
    }

    #[test]
    fn unknown_kind() {
        let v = serde_json::json!({"kind": "spiral"});
        assert!(matches!(FieldKind::from_json(&v), Err(Error::UnknownKind(k)) if k == "spiral"));
        let v = serde_json::json!({"kind": "power_map", "k": 3});
        assert_eq!(FieldKind::from_json(&v).unwrap(), FieldKind::PowerMap { k: 3 });
    }

    #[test]
    fn gradients_match_finite_differences() {
        let kinds = [
            FieldKind::Affine {
                a: Mat2::new(1.0, 2.0, -0.5, 0.25),
                b: [1.0, 1.0],
            },
            FieldKind::HolomorphicPoly {
                coeffs: vec![[0.0, 1.0], [1.0, -1.0], [0.5, 0.0], [0.0, 0.2]],
            },
            FieldKind::PowerMap { k: 3 },
            FieldKind::Radial {
                profile: RadialProfile::Power {
                    exponent: 2.0,
                    scale: 0.5,
                },
            },
            FieldKind::PerturbedRotation {
                theta: 0.4,
                amplitude: 0.3,
            },
        ];
        for h in [1.0 / 32.0, 1.0 / 64.0] {
            let g = Grid2::square_masked(-1.0, 1.0, h, |p| {
                let r = p[0].hypot(p[1]);
                r > 0.2 && r < 0.95
            });
            for kind in &kinds {
                let du = finite_diff_gradient(&generate_test_field(kind, &g));
                let mut err: f64 = 0.0;
                for k in du.active_indices() {
                    let interior = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                        .iter()
                        .all(|&(di, dj)| g.offset(k, di, dj).is_some_and(|n| g.mask[n]));
                    if interior {
                        err = err.max((du.values[k] - kind.gradient(g.center(k))).max_abs());
                    }
                }
                assert!(err <= 20.0 * h * h, "{kind:?} h={h} err={err}");
            }
        }
    }
}
