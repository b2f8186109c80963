//! Target sets `Γ ⊂ ℝ^{2×2}`, their quasiconformal envelopes
//! `E_Γ = {X : |A − X|² ≤ K det(A − X) for all A ∈ Γ}`, distances to `Γ`, and
//! rigidity deficits.
//!
//! All matrix norms are operator norms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{cells_in_ball, finite_diff_gradient, Ball, VectorField};
use crate::matalg::{to_conformal, ConformalCoords, Mat2};

pub const DEFAULT_REFINEMENT_DEPTH: usize = 20;

/// Tolerance on `|a₋|` for treating a sample matrix as conformal.
const CONFORMAL_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum GammaVariant {
    Singleton(Mat2),
    SO2,
    SpanId,
    /// Closed polyline, parameter-ordered.
    CurveSamples(Vec<Mat2>),
    /// Points `α` of the `∂z`-plane identifying `A = α·z`.
    ConformalCurve(Vec<Complex64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaJson", into = "GammaJson")]
pub struct GammaSpec {
    pub variant: GammaVariant,
    pub k_distortion: f64,
    pub refinement_depth: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GammaJson {
    variant: String,
    #[serde(rename = "K")]
    k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<serde_json::Value>,
    #[serde(default = "default_depth")]
    refinement_depth: usize,
}

fn default_depth() -> usize {
    DEFAULT_REFINEMENT_DEPTH
}

impl TryFrom<GammaJson> for GammaSpec {
    type Error = Error;

    fn try_from(j: GammaJson) -> Result<Self> {
        let samples = || {
            j.samples
                .clone()
                .ok_or_else(|| Error::InvalidGamma(format!("{} needs `samples`", j.variant)))
        };
        let variant = match j.variant.as_str() {
            "Singleton" => GammaVariant::Singleton(Mat2::from_rows(
                j.matrix
                    .ok_or_else(|| Error::InvalidGamma("Singleton needs `matrix`".into()))?,
            )),
            "SO2" => GammaVariant::SO2,
            "SpanId" => GammaVariant::SpanId,
            "CurveSamples" => {
                let rows: Vec<[[f64; 2]; 2]> = serde_json::from_value(samples()?)?;
                GammaVariant::CurveSamples(rows.into_iter().map(Mat2::from_rows).collect())
            }
            "ConformalCurve" => {
                let pts: Vec<[f64; 2]> = serde_json::from_value(samples()?)?;
                GammaVariant::ConformalCurve(
                    pts.into_iter().map(|p| Complex64::new(p[0], p[1])).collect(),
                )
            }
            other => return Err(Error::InvalidGamma(format!("unknown variant `{other}`"))),
        };
        GammaSpec::new(variant, j.k, j.refinement_depth)
    }
}

impl From<GammaSpec> for GammaJson {
    fn from(g: GammaSpec) -> Self {
        let (variant, matrix, samples) = match g.variant {
            GammaVariant::Singleton(m) => ("Singleton", Some(m.to_rows()), None),
            GammaVariant::SO2 => ("SO2", None, None),
            GammaVariant::SpanId => ("SpanId", None, None),
            GammaVariant::CurveSamples(s) => (
                "CurveSamples",
                None,
                Some(serde_json::json!(s.iter().map(|m| m.to_rows()).collect::<Vec<_>>())),
            ),
            GammaVariant::ConformalCurve(s) => (
                "ConformalCurve",
                None,
                Some(serde_json::json!(s.iter().map(|a| [a.re, a.im]).collect::<Vec<_>>())),
            ),
        };
        GammaJson {
            variant: variant.to_string(),
            k: g.k_distortion,
            matrix,
            samples,
            refinement_depth: g.refinement_depth,
        }
    }
}

impl GammaSpec {
    pub fn new(variant: GammaVariant, k_distortion: f64, refinement_depth: usize) -> Result<Self> {
        if !(k_distortion >= 1.0) || !k_distortion.is_finite() {
            return Err(Error::InvalidGamma(format!("K = {k_distortion} < 1")));
        }
        match &variant {
            GammaVariant::CurveSamples(s) => {
                if s.len() < 3 || s[0] == s[1] {
                    return Err(Error::InvalidGamma(
                        "curve needs ≥ 3 samples with distinct first two points".into(),
                    ));
                }
            }
            GammaVariant::ConformalCurve(s) => {
                if s.len() < 3 || s[0] == s[1] {
                    return Err(Error::InvalidGamma(
                        "curve needs ≥ 3 samples with distinct first two points".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(GammaSpec {
            variant,
            k_distortion,
            refinement_depth,
        })
    }

    pub fn so2(k: f64) -> Result<Self> {
        Self::new(GammaVariant::SO2, k, DEFAULT_REFINEMENT_DEPTH)
    }

    pub fn span_id(k: f64) -> Result<Self> {
        Self::new(GammaVariant::SpanId, k, DEFAULT_REFINEMENT_DEPTH)
    }

    pub fn singleton(m: Mat2, k: f64) -> Result<Self> {
        Self::new(GammaVariant::Singleton(m), k, DEFAULT_REFINEMENT_DEPTH)
    }

    pub fn curve(samples: Vec<Mat2>, k: f64) -> Result<Self> {
        Self::new(GammaVariant::CurveSamples(samples), k, DEFAULT_REFINEMENT_DEPTH)
    }

    pub fn conformal_curve(samples: Vec<Complex64>, k: f64) -> Result<Self> {
        Self::new(GammaVariant::ConformalCurve(samples), k, DEFAULT_REFINEMENT_DEPTH)
    }

    /// SO(2) sampled at `n` equally spaced angles.
    pub fn so2_samples(n: usize, k: f64) -> Result<Self> {
        let step = std::f64::consts::TAU / n as f64;
        Self::curve((0..n).map(|i| Mat2::rotation(i as f64 * step)).collect(), k)
    }

    /// `(K − 1)/(K + 1)`.
    pub fn k_small(&self) -> f64 {
        (self.k_distortion - 1.0) / (self.k_distortion + 1.0)
    }

    /// The `∂z`-plane points of `Γ` when `Γ` is a finite subset of CO(2).
    fn conformal_points(&self) -> Option<Vec<Complex64>> {
        match &self.variant {
            GammaVariant::Singleton(m) => {
                let c = to_conformal(*m);
                (c.a_minus.norm() <= CONFORMAL_TOL).then(|| vec![c.a_plus])
            }
            GammaVariant::CurveSamples(s) => s
                .iter()
                .map(|m| {
                    let c = to_conformal(*m);
                    (c.a_minus.norm() <= CONFORMAL_TOL).then_some(c.a_plus)
                })
                .collect(),
            GammaVariant::ConformalCurve(s) => Some(s.clone()),
            _ => None,
        }
    }

    pub fn is_conformal(&self) -> bool {
        matches!(self.variant, GammaVariant::SO2 | GammaVariant::SpanId)
            || self.conformal_points().is_some()
    }
}

/// Outcome of an envelope query. `gap = |A − X|² − K det(A − X)` at the
/// reported `A`; positive means that `A` violates the inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeVerdict {
    pub member: bool,
    pub worst_a: Mat2,
    pub gap: f64,
}

fn gap(a: Mat2, x: Mat2, k: f64) -> f64 {
    let b = a - x;
    let n = b.norm();
    n * n - k * b.det()
}

/// `|B|² ≤ K det B` in the form `|b₋| ≤ k|b₊|`, exact at `B = 0`.
fn pair_ok(a: Mat2, x: Mat2, k_small: f64) -> bool {
    let c = to_conformal(a - x);
    c.a_minus.norm() <= k_small * c.a_plus.norm()
}

pub fn envelope_member(x: Mat2, g: &GammaSpec) -> EnvelopeVerdict {
    let kk = g.k_distortion;
    let k = g.k_small();
    let c = to_conformal(x);
    let closed_form = |worst_a: Mat2| {
        let mu = beltrami_coefficient(c, g).unwrap_or_default();
        let d = dist_conformal(c.a_plus, g).unwrap_or(0.0);
        let member = if d > 0.0 {
            mu.norm() <= k
        } else {
            c.a_minus.norm() == 0.0
        };
        EnvelopeVerdict {
            member,
            worst_a,
            gap: gap(worst_a, x, kk),
        }
    };
    match &g.variant {
        GammaVariant::SO2 => {
            let theta = if c.a_plus.norm() > 0.0 { c.a_plus.arg() } else { 0.0 };
            closed_form(Mat2::rotation(theta))
        }
        GammaVariant::SpanId => closed_form(Mat2::scalar(c.a_plus.re)),
        GammaVariant::ConformalCurve(s) => {
            let (alpha, _) = nearest_on_polyline(c.a_plus, s);
            closed_form(from_alpha(alpha))
        }
        GammaVariant::Singleton(m) => EnvelopeVerdict {
            member: pair_ok(*m, x, k),
            worst_a: *m,
            gap: gap(*m, x, kk),
        },
        GammaVariant::CurveSamples(s) => {
            let mut member = true;
            let mut worst = (s[0], f64::NEG_INFINITY);
            for &a in s {
                member &= pair_ok(a, x, k);
                let gp = gap(a, x, kk);
                if gp > worst.1 {
                    worst = (a, gp);
                }
            }
            EnvelopeVerdict {
                member,
                worst_a: worst.0,
                gap: worst.1,
            }
        }
    }
}

fn from_alpha(alpha: Complex64) -> Mat2 {
    Mat2::new(alpha.re, -alpha.im, alpha.im, alpha.re)
}

/// Closest point to `p` on the closed polyline through `pts`.
fn nearest_on_polyline(p: Complex64, pts: &[Complex64]) -> (Complex64, f64) {
    let n = pts.len();
    let mut best = (pts[0], f64::INFINITY);
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let ab = b - a;
        let l2 = ab.norm_sqr();
        let t = if l2 > 0.0 {
            (((p - a) * ab.conj()).re / l2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = a + ab * t;
        let d = (p - q).norm();
        if d < best.1 {
            best = (q, d);
        }
    }
    best
}

/// Golden-section minimisation of `f` on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let (fa, fb) = (f(a), f(b));
    [(c, fc), (d, fd), (a, fa), (b, fb)]
        .into_iter()
        .fold((a, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc })
}

/// Minimum of `f(s_i + t (s_{i+1} − s_i))` over the closed polyline: best
/// sample, then golden-section on its two adjacent segments.
fn polyline_min<T: Copy>(
    samples: &[T],
    lerp: impl Fn(T, T, f64) -> T,
    f: impl Fn(T) -> f64,
    depth: usize,
) -> (T, f64) {
    let n = samples.len();
    let (i, fi) = samples
        .iter()
        .enumerate()
        .map(|(i, &s)| (i, f(s)))
        .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
    let mut best = (samples[i], fi);
    for (a, b) in [(samples[(i + n - 1) % n], samples[i]), (samples[i], samples[(i + 1) % n])] {
        let (t, ft) = golden_min(|t| f(lerp(a, b, t)), 0.0, 1.0, depth);
        if ft < best.1 {
            best = (lerp(a, b, t), ft);
        }
    }
    best
}

/// Operator-norm distance from `x` to `Γ`, with the minimising point.
pub fn nearest_matrix(x: Mat2, g: &GammaSpec) -> (Mat2, f64) {
    let c = to_conformal(x);
    match &g.variant {
        GammaVariant::SO2 => {
            let theta = if c.a_plus.norm() > 0.0 { c.a_plus.arg() } else { 0.0 };
            (
                Mat2::rotation(theta),
                (c.a_plus.norm() - 1.0).abs() + c.a_minus.norm(),
            )
        }
        GammaVariant::SpanId => (
            Mat2::scalar(c.a_plus.re),
            c.a_plus.im.abs() + c.a_minus.norm(),
        ),
        GammaVariant::Singleton(m) => (*m, (x - *m).norm()),
        GammaVariant::ConformalCurve(s) => {
            let (alpha, d) = nearest_on_polyline(c.a_plus, s);
            (from_alpha(alpha), d + c.a_minus.norm())
        }
        GammaVariant::CurveSamples(s) => polyline_min(
            s,
            |a, b, t| a + (b - a) * t,
            |a| (x - a).norm(),
            g.refinement_depth,
        ),
    }
}

pub fn dist_matrix(x: Mat2, g: &GammaSpec) -> f64 {
    nearest_matrix(x, g).1
}

/// Distance in the `∂z`-plane from `a₊` to the points identifying `Γ ⊂ CO(2)`.
pub fn dist_conformal(a_plus: Complex64, g: &GammaSpec) -> Result<f64> {
    match &g.variant {
        GammaVariant::SO2 => Ok((a_plus.norm() - 1.0).abs()),
        GammaVariant::SpanId => Ok(a_plus.im.abs()),
        GammaVariant::ConformalCurve(s) => Ok(nearest_on_polyline(a_plus, s).1),
        GammaVariant::Singleton(_) => match g.conformal_points() {
            Some(p) => Ok((a_plus - p[0]).norm()),
            None => Err(Error::UnsupportedVariant("Singleton outside CO(2)")),
        },
        GammaVariant::CurveSamples(_) => match g.conformal_points() {
            Some(p) => Ok(nearest_on_polyline(a_plus, &p).1),
            None => Err(Error::UnsupportedVariant("CurveSamples outside CO(2)")),
        },
    }
}

/// `μ = a₋ / dist(a₊, Γ)`, and `0` where the distance vanishes.
pub fn beltrami_coefficient(du: ConformalCoords, g: &GammaSpec) -> Result<Complex64> {
    let d = dist_conformal(du.a_plus, g)?;
    Ok(if d > 0.0 {
        du.a_minus / d
    } else {
        Complex64::new(0.0, 0.0)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub is_elliptic: bool,
    pub worst_pair: (usize, usize),
    pub worst_ratio: f64,
}

/// Pairwise check of `|γ(t) − γ(s)|² ≤ K det(γ(t) − γ(s))` over all samples.
pub fn check_elliptic_curve(g: &GammaSpec) -> Result<EllipticityReport> {
    let s = match &g.variant {
        GammaVariant::CurveSamples(s) => s.clone(),
        GammaVariant::ConformalCurve(s) => s.iter().map(|&a| from_alpha(a)).collect(),
        _ => return Err(Error::UnsupportedVariant("ellipticity needs a sampled curve")),
    };
    let mut worst = ((0, 0), 0.0f64);
    for i in 0..s.len() {
        for j in (i + 1)..s.len() {
            let c = to_conformal(s[j] - s[i]);
            let p = c.a_plus.norm();
            let q = c.a_minus.norm();
            if p == 0.0 && q == 0.0 {
                continue;
            }
            // |B|²/det B = (p + q)/(p − q).
            let ratio = if p > q { (p + q) / (p - q) } else { f64::INFINITY };
            if ratio > worst.1 || worst.0 == (0, 0) {
                worst = ((i, j), ratio);
            }
        }
    }
    Ok(EllipticityReport {
        is_elliptic: worst.1 <= g.k_distortion,
        worst_pair: worst.0,
        worst_ratio: worst.1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityDeficit {
    pub best_a: Mat2,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when `rhs` is degenerate.
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

const RHS_DEGENERATE: f64 = 1e-14;
const SWEEP: usize = 720;

/// `lhs = min_A ∫_{½B} |Dv − A|²`, `rhs = ∫_B dist(Dv, Γ)²`, both with the
/// finite-difference gradient of `v`. The minimum is taken over a parameter
/// sweep of `Γ` plus local refinement, so `lhs` bounds the infimum from above.
pub fn rigidity_deficit(v: &VectorField, ball: &Ball, g: &GammaSpec) -> Result<RigidityDeficit> {
    let dv = finite_diff_gradient(v);
    let grid = &dv.grid;
    let half = cells_in_ball(grid, &dv.active, &ball.dilate(0.5));
    let full = cells_in_ball(grid, &dv.active, ball);
    if half.is_empty() || full.is_empty() {
        return Err(Error::EmptyBall {
            center: ball.center,
            radius: ball.radius,
        });
    }
    let area = grid.cell_area();
    let grads: Vec<Mat2> = half.iter().map(|&k| dv.values[k]).collect();
    let objective = |a: Mat2| {
        grads
            .iter()
            .map(|&m| {
                let n = (m - a).norm();
                n * n
            })
            .sum::<f64>()
            * area
    };
    let depth = g.refinement_depth.max(DEFAULT_REFINEMENT_DEPTH);
    let (best_a, lhs) = match &g.variant {
        GammaVariant::Singleton(m) => (*m, objective(*m)),
        GammaVariant::SO2 => {
            let f = |t: f64| objective(Mat2::rotation(t));
            let step = std::f64::consts::TAU / SWEEP as f64;
            let mut best = (0..SWEEP)
                .map(|i| i as f64 * step)
                .map(|t| (t, f(t)))
                .fold((0.0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
            let mean = grads.iter().fold(Mat2::ZERO, |acc, &m| acc + m) * (1.0 / grads.len() as f64);
            let ap = to_conformal(mean).a_plus;
            if ap.norm() > 0.0 {
                let t = ap.arg();
                let ft = f(t);
                if ft < best.1 {
                    best = (t, ft);
                }
            }
            let (t, ft) = golden_min(f, best.0 - step, best.0 + step, depth);
            if ft < best.1 {
                best = (t, ft);
            }
            (Mat2::rotation(best.0), best.1)
        }
        GammaVariant::SpanId => {
            let t_max = 4.0 * grads.iter().map(|m| m.norm()).fold(0.0, f64::max);
            let f = |t: f64| objective(Mat2::scalar(t));
            let (t, ft) = if t_max > 0.0 {
                golden_min(f, -t_max, t_max, depth + 40)
            } else {
                (0.0, f(0.0))
            };
            (Mat2::scalar(t), ft)
        }
        GammaVariant::CurveSamples(s) => polyline_min(s, |a, b, t| a + (b - a) * t, objective, depth),
        GammaVariant::ConformalCurve(s) => {
            let (alpha, val) = polyline_min(s, |a, b, t| a + (b - a) * t, |a| objective(from_alpha(a)), depth);
            (from_alpha(alpha), val)
        }
    };
    let rhs = full
        .iter()
        .map(|&k| {
            let d = dist_matrix(dv.values[k], g);
            d * d
        })
        .sum::<f64>()
        * area;
    let degenerate = rhs < RHS_DEGENERATE;
    Ok(RigidityDeficit {
        best_a,
        lhs,
        rhs,
        ratio: (!degenerate).then(|| lhs / rhs),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{generate_test_field, FieldKind, Grid2};
    use crate::matalg::from_conformal;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cc(ap: Complex64, am: Complex64) -> Mat2 {
        from_conformal(ConformalCoords::new(ap, am))
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_mat(rng: &mut impl Rng) -> Mat2 {
        Mat2::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        )
    }

    #[test]
    fn identity_in_envelope_of_zero() {
        let g = GammaSpec::singleton(Mat2::ZERO, 1.0).unwrap();
        assert!(envelope_member(Mat2::IDENTITY, &g).member);
    }

    #[test]
    fn so2_envelope_examples() {
        let g = GammaSpec::so2(3.0).unwrap();
        assert!(envelope_member(cc(c(0.0, 0.0), c(0.4, 0.0)), &g).member);
        let v = envelope_member(cc(c(1.0, 0.0), c(0.1, 0.0)), &g);
        assert!(!v.member);
        assert!(v.gap > 0.0);
    }

    #[test]
    fn sampled_so2_agrees_with_closed_form() {
        let closed = GammaSpec::so2(3.0).unwrap();
        let sampled = GammaSpec::so2_samples(64, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut disagree = 0;
        for _ in 0..1000 {
            let x = random_mat(&mut rng);
            let a = envelope_member(x, &closed).member;
            let b = envelope_member(x, &sampled).member;
            if a != b {
                // Sampling can only miss violations, and only near the boundary.
                assert!(!a && b);
                let cx = to_conformal(x);
                let margin = (cx.a_minus.norm() - closed.k_small() * (cx.a_plus.norm() - 1.0).abs()).abs();
                assert!(margin < 0.05, "margin {margin}");
                disagree += 1;
            }
        }
        assert!(disagree < 20, "{disagree}");
    }

    #[test]
    fn rotation_samples_are_elliptic() {
        let g = GammaSpec::so2_samples(64, 1.0).unwrap();
        let r = check_elliptic_curve(&g).unwrap();
        assert!(r.is_elliptic, "{r:?}");
        assert_eq!(r.worst_ratio, 1.0);
    }

    #[test]
    fn rank_one_connection_is_not_elliptic() {
        let a = Mat2::new(0.3, 0.1, -0.2, 0.7);
        let g = GammaSpec::curve(vec![a, a + Mat2::diag(1.0, 0.0), Mat2::rotation(1.0)], 1e6).unwrap();
        let r = check_elliptic_curve(&g).unwrap();
        assert!(!r.is_elliptic);
        assert_eq!(r.worst_ratio, f64::INFINITY);
        assert_eq!(r.worst_pair, (0, 1));
    }

    #[test]
    fn repeated_samples_are_skipped() {
        let s = vec![Mat2::rotation(0.0), Mat2::rotation(1.0), Mat2::rotation(2.0), Mat2::rotation(0.0)];
        let r = check_elliptic_curve(&GammaSpec::curve(s, 1.0).unwrap()).unwrap();
        assert!(r.worst_ratio.is_finite());
    }

    #[test]
    fn distance_examples() {
        let so2 = GammaSpec::so2(1.0).unwrap();
        assert_eq!(dist_matrix(Mat2::rotation(0.7), &so2), 0.0);
        assert!((dist_matrix(Mat2::diag(0.5, -0.5), &so2) - 1.5).abs() < 1e-15);
        let span = GammaSpec::span_id(1.0).unwrap();
        assert_eq!(dist_conformal(c(0.0, 1.0), &span).unwrap(), 1.0);
        assert_eq!(dist_conformal(c(0.0, 0.0), &so2).unwrap(), 1.0);
        let m = Mat2::new(1.0, 2.0, 3.0, 4.0);
        let single = GammaSpec::singleton(m, 2.0).unwrap();
        assert_eq!(dist_matrix(m, &single), 0.0);
        assert!(dist_conformal(c(0.0, 0.0), &single).is_err());
    }

    #[test]
    fn so2_distance_matches_angle_sweep() {
        let g = GammaSpec::so2(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = random_mat(&mut rng);
            let f = |t: f64| (x - Mat2::rotation(t)).norm();
            let step = std::f64::consts::TAU / 1e4;
            let (t0, _) = (0..10_000)
                .map(|i| (i as f64 * step, f(i as f64 * step)))
                .fold((0.0, f64::INFINITY), |a, v| if v.1 < a.1 { v } else { a });
            // The objective has kinks, so the raw sweep is only O(step) accurate.
            let sweep = golden_min(f, t0 - step, t0 + step, 60).1;
            let d = dist_matrix(x, &g);
            assert!(d <= sweep + 1e-12);
            assert!((d - sweep).abs() < 1e-6, "{d} vs {sweep}");
        }
    }

    #[test]
    fn sampled_curve_distance_is_refined() {
        let sampled = GammaSpec::so2_samples(16, 1.0).unwrap();
        let closed = GammaSpec::so2(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = random_mat(&mut rng);
            let d = dist_matrix(x, &sampled);
            let plain = match &sampled.variant {
                GammaVariant::CurveSamples(s) => s.iter().map(|&a| (x - a).norm()).fold(f64::INFINITY, f64::min),
                _ => unreachable!(),
            };
            assert!(d <= plain + 1e-15);
            // Chords of a 16-gon sit within 1 − cos(π/16) of the circle.
            assert!((d - dist_matrix(x, &closed)).abs() <= 1.0 - (std::f64::consts::PI / 16.0).cos() + 1e-9);
        }
        assert_eq!(dist_matrix(Mat2::rotation(std::f64::consts::TAU / 16.0), &sampled), 0.0);
    }

    #[test]
    fn conformal_curve_distance_matches_circle() {
        let pts: Vec<Complex64> = (0..256)
            .map(|i| Complex64::from_polar(1.0, i as f64 * std::f64::consts::TAU / 256.0))
            .collect();
        let g = GammaSpec::conformal_curve(pts, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = c(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let d = dist_conformal(a, &g).unwrap();
            assert!((d - (a.norm() - 1.0).abs()).abs() < 1e-3);
        }
    }

    #[test]
    fn beltrami_examples() {
        let span = GammaSpec::span_id(2.0).unwrap();
        let du = ConformalCoords::new(c(0.0, 1.0), c(0.3, 0.0));
        let mu = beltrami_coefficient(du, &span).unwrap();
        assert_eq!(mu, c(0.3, 0.0));
        assert_eq!(du.a_minus, mu * du.a_plus.im);
        let holo = ConformalCoords::new(c(5.0, 0.0), c(0.0, 0.0));
        for g in [GammaSpec::so2(2.0).unwrap(), span.clone()] {
            assert_eq!(beltrami_coefficient(holo, &g).unwrap(), c(0.0, 0.0));
        }
        let on_gamma = ConformalCoords::new(c(2.0, 0.0), c(0.5, 0.0));
        assert_eq!(beltrami_coefficient(on_gamma, &span).unwrap(), c(0.0, 0.0));
    }

    fn conformal_variants(k: f64) -> Vec<GammaSpec> {
        let circle: Vec<Complex64> = (0..64)
            .map(|i| Complex64::from_polar(1.0 + 0.3 * (3.0 * i as f64 * 0.1).sin(), i as f64 * std::f64::consts::TAU / 64.0))
            .collect();
        vec![
            GammaSpec::so2(k).unwrap(),
            GammaSpec::span_id(k).unwrap(),
            GammaSpec::conformal_curve(circle, k).unwrap(),
            GammaSpec::singleton(Mat2::rotation(0.4) * 2.0, k).unwrap(),
        ]
    }

    #[test]
    fn envelope_matches_conformal_characterisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for g in conformal_variants(3.0) {
            let k = g.k_small();
            for _ in 0..10_000 {
                let x = random_mat(&mut rng);
                let cx = to_conformal(x);
                let d = dist_conformal(cx.a_plus, &g).unwrap();
                let member = envelope_member(x, &g).member;
                let mu = beltrami_coefficient(cx, &g).unwrap();
                // Algebraically |a₋| ≤ k d; allow for one rounding on the boundary.
                let lhs = cx.a_minus.norm();
                if (lhs - k * d).abs() > 1e-12 * (1.0 + lhs) {
                    assert_eq!(member, lhs <= k * d, "{g:?} {x:?}");
                }
                if member {
                    assert!(mu.norm() <= k);
                }
            }
        }
    }

    #[test]
    fn span_id_distance_reassembles() {
        let g = GammaSpec::span_id(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let x = random_mat(&mut rng);
            let cx = to_conformal(x);
            let mu = beltrami_coefficient(cx, &g).unwrap().norm();
            let im = cx.a_plus.im.abs();
            let d = dist_matrix(x, &g);
            assert!((d - (im + cx.a_minus.norm())).abs() < 1e-14);
            assert!((d - (1.0 + mu) * im).abs() < 1e-12 * (1.0 + d));
        }
    }

    #[test]
    fn distance_zero_on_gamma_with_zero_gap() {
        for g in [GammaSpec::so2(2.0).unwrap(), GammaSpec::so2_samples(32, 2.0).unwrap()] {
            let x = Mat2::rotation(std::f64::consts::TAU * 5.0 / 32.0);
            assert!(dist_matrix(x, &g) < 1e-6);
            let v = envelope_member(x, &g);
            assert!(v.member);
            assert!((v.worst_a - x).max_abs() < 1e-6);
        }
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let g = GammaSpec::so2_samples(5, 2.5).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"K\""));
        let back: GammaSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let v: GammaSpec = serde_json::from_str(r#"{"variant":"SO2","K":3}"#).unwrap();
        assert_eq!(v.refinement_depth, DEFAULT_REFINEMENT_DEPTH);
        assert!(serde_json::from_str::<GammaSpec>(r#"{"variant":"SO2","K":0.5}"#).is_err());
        assert!(serde_json::from_str::<GammaSpec>(r#"{"variant":"Cone","K":2}"#).is_err());
        let two = r#"{"variant":"CurveSamples","K":2,"samples":[[[1,0],[0,1]],[[0,1],[1,0]]]}"#;
        assert!(serde_json::from_str::<GammaSpec>(two).is_err());
    }

    #[test]
    fn rigidity_exact_inclusion() {
        let grid = Grid2::square(-1.0, 1.0, 1.0 / 32.0);
        let id = generate_test_field(
            &FieldKind::Affine {
                a: Mat2::IDENTITY,
                b: [0.0, 0.0],
            },
            &grid,
        );
        let r = rigidity_deficit(&id, &Ball::new([0.0, 0.0], 0.5), &GammaSpec::so2(1.0).unwrap()).unwrap();
        assert!((r.best_a - Mat2::IDENTITY).max_abs() < 1e-12);
        assert!(r.lhs < 1e-20);
        assert!(r.degenerate);
        assert!(r.ratio.is_none());
    }

    #[test]
    fn rigidity_perturbed_rotation() {
        let grid = Grid2::square(-1.0, 1.0, 1.0 / 64.0);
        let kind = FieldKind::PerturbedRotation {
            theta: 0.6,
            amplitude: 0.01,
        };
        let v = generate_test_field(&kind, &grid);
        let ball = Ball::new([0.1, 0.0], 0.6);
        let g = GammaSpec::so2(1.0).unwrap();
        let r = rigidity_deficit(&v, &ball, &g).unwrap();
        // Independent quadrature with the analytic gradient and a fine angle sweep.
        let area = grid.cell_area();
        let half = cells_in_ball(&grid, &grid.mask, &ball.dilate(0.5));
        let full = cells_in_ball(&grid, &grid.mask, &ball);
        let lhs_at = |t: f64| {
            half.iter()
                .map(|&k| (kind.gradient(grid.center(k)) - Mat2::rotation(t)).norm().powi(2))
                .sum::<f64>()
                * area
        };
        let lhs = (0..4000).map(|i| lhs_at(0.5 + i as f64 * 0.2 / 4000.0)).fold(f64::INFINITY, f64::min);
        let rhs: f64 = full
            .iter()
            .map(|&k| dist_matrix(kind.gradient(grid.center(k)), &g).powi(2))
            .sum::<f64>()
            * area;
        assert!(!r.degenerate);
        assert!((r.lhs - lhs).abs() <= 1e-3 * lhs, "{} {lhs}", r.lhs);
        assert!((r.rhs - rhs).abs() <= 1e-3 * rhs, "{} {rhs}", r.rhs);
        let ratio = r.ratio.unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);
    }

    #[test]
    fn rigidity_empty_ball() {
        let grid = Grid2::square(0.0, 1.0, 0.1);
        let v = Field::constant(&grid, [0.0, 0.0]);
        assert!(rigidity_deficit(&v, &Ball::new([9.0, 9.0], 0.1), &GammaSpec::so2(1.0).unwrap()).is_err());
    }

    use crate::field::Field;
}
