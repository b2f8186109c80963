//! Muckenhoupt-type checks on sampled weights: reverse Hölder inequalities,
//! `A_p` constants, doubling, measure comparison, negative moments and the
//! zero/positive dichotomy.
//!
//! Ball averages are cell averages over the active cells whose centres lie in
//! the ball; measures are `μ(E) = Σ_{E} w h²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ball_family, cells_in_ball, Ball, BallFamily, ComplementDistance, Field, Grid2, ScalarField};

/// Averages below this count as vanishing.
pub const MEAN_FLOOR: f64 = 1e-300;
/// Floor applied to `w` before negative powers in `A_p` products.
pub const AP_FLOOR: f64 = 1e-300;
/// Floor applied to `f` in negative moments.
pub const MOMENT_FLOOR: f64 = 1e-12;
/// A cell is a zero of `w` when `w ≤ ZERO_REL · mean(w)`.
pub const ZERO_REL: f64 = 1e-12;
pub const EPS_CAP: f64 = 8.0;
pub const EPS_MIN: f64 = 1e-3;
pub const EPS_TOL: f64 = 1e-3;
pub const AP_LADDER: [f64; 6] = [1.1, 1.25, 1.5, 2.0, 3.0, 5.0];
/// Growth factor of an `A_p` constant under one halving of `h` above which
/// the constant is classified as divergent.
pub const DIVERGENCE_GROWTH: f64 = 1.5;
/// Zero-set fraction that makes a ball count as partially vanishing.
pub const PARTIAL_ZERO_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightField {
    pub w: ScalarField,
}

impl WeightField {
    pub fn new(w: ScalarField) -> Result<Self> {
        for k in w.active_indices() {
            let v = w.values[k];
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "weight must be finite and nonnegative, got {v} at cell {k}"
                )));
            }
        }
        Ok(WeightField { w })
    }

    pub fn from_fn(grid: &Grid2, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(Field::from_fn(grid, f))
    }

    pub fn grid(&self) -> &Grid2 {
        &self.w.grid
    }

    pub fn cells(&self, ball: &Ball) -> Vec<usize> {
        cells_in_ball(&self.w.grid, &self.w.active, ball)
    }

    pub fn values_in(&self, ball: &Ball) -> Vec<f64> {
        self.cells(ball).into_iter().map(|k| self.w.values[k]).collect()
    }

    /// `μ(E)` for a set of cells.
    pub fn measure(&self, cells: &[usize]) -> f64 {
        cells.iter().map(|&k| self.w.values[k]).sum::<f64>() * self.w.grid.cell_area()
    }

    pub fn total_measure(&self) -> f64 {
        self.w.integral()
    }

    /// Threshold below which a cell counts as a zero of `w`.
    pub fn zero_threshold(&self) -> f64 {
        ZERO_REL * self.w.mean_active().max(0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        WeightField { w: self.w.map(|v| c * v) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallRecord {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl From<Ball> for BallRecord {
    fn from(b: Ball) -> Self {
        BallRecord {
            cx: b.center[0],
            cy: b.center[1],
            r: b.radius,
        }
    }
}

impl From<BallRecord> for Ball {
    fn from(b: BallRecord) -> Self {
        Ball::new([b.cx, b.cy], b.r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub t: f64,
    pub radii: Vec<f64>,
    pub count: usize,
}

impl From<&BallFamily> for FamilySummary {
    fn from(f: &BallFamily) -> Self {
        FamilySummary {
            t: f.t,
            radii: f.radii.clone(),
            count: f.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "reverse_holder")]
pub struct RHCertificate {
    pub epsilon: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub t: f64,
    /// Sup of the ratio over the family.
    pub constant: f64,
    pub worst_ball: BallRecord,
    pub worst_ratio: f64,
    pub pass: bool,
    pub family: FamilySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename = "a_p")]
pub struct ApCertificate {
    pub p: f64,
    pub constant: f64,
    pub worst_ball: BallRecord,
    pub worst_ratio: f64,
    pub clamped_cells: usize,
    pub family: FamilySummary,
}

/// Max with ties broken by the lowest index.
fn argmax(vals: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in vals.iter().enumerate() {
        if v > best.1 || (v.is_nan() && !best.1.is_nan()) {
            best = (i, v);
        }
    }
    best
}

/// `(fint w^{1+ε})^{1/(1+ε)} / fint w` on one ball's samples; `0` when both
/// sides vanish.
pub fn rh_ratio(values: &[f64], epsilon: f64) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().copied().fold(0.0, f64::max);
    if m < MEAN_FLOOR {
        return 0.0;
    }
    let q = 1.0 + epsilon;
    let mean1 = values.iter().map(|v| v / m).sum::<f64>() / n;
    let meanq = values.iter().map(|v| (v / m).powf(q)).sum::<f64>() / n;
    let lhs = meanq.powf(1.0 / q);
    if mean1 * m < MEAN_FLOOR {
        return if lhs * m < MEAN_FLOOR { 0.0 } else { f64::INFINITY };
    }
    lhs / mean1
}

fn ball_samples(w: &WeightField, fam: &BallFamily) -> Result<Vec<Vec<f64>>> {
    if fam.is_empty() {
        return Err(Error::EmptyFamily);
    }
    fam.balls
        .par_iter()
        .map(|b| {
            let v = w.values_in(b);
            if v.is_empty() {
                Err(Error::EmptyBall {
                    center: b.center,
                    radius: b.radius,
                })
            } else {
                Ok(v)
            }
        })
        .collect()
}

fn rh_from_samples(samples: &[Vec<f64>], fam: &BallFamily, epsilon: f64, c: f64) -> RHCertificate {
    let ratios: Vec<f64> = samples.par_iter().map(|v| rh_ratio(v, epsilon)).collect();
    let (i, worst) = argmax(&ratios);
    RHCertificate {
        epsilon,
        c,
        t: fam.t,
        constant: worst,
        worst_ball: fam.balls[i].into(),
        worst_ratio: worst,
        pass: worst <= c,
        family: fam.into(),
    }
}

/// Per-ball reverse Hölder ratios in family order.
pub fn rh_ratios(w: &WeightField, fam: &BallFamily, epsilon: f64) -> Result<Vec<f64>> {
    Ok(ball_samples(w, fam)?
        .par_iter()
        .map(|v| rh_ratio(v, epsilon))
        .collect())
}

/// Checks `(fint_B w^{1+ε})^{1/(1+ε)} ≤ C fint_B w` on every ball.
pub fn reverse_holder_check(w: &WeightField, fam: &BallFamily, epsilon: f64, c: f64) -> Result<RHCertificate> {
    if !(epsilon > 0.0) || !(c >= 1.0) {
        return Err(Error::InvalidArgument(format!("need ε > 0 and C ≥ 1, got ε = {epsilon}, C = {c}")));
    }
    let samples = ball_samples(w, fam)?;
    Ok(rh_from_samples(&samples, fam, epsilon, c))
}

/// Largest `ε ∈ (0, EPS_CAP]` with the reverse Hölder inequality holding at
/// constant `c_budget`, by bisection (the ratio is nondecreasing in `ε`).
/// Returns `0` when `ε = EPS_MIN` already fails.
pub fn estimate_rh_exponent(w: &WeightField, fam: &BallFamily, c_budget: f64) -> Result<f64> {
    if !(c_budget >= 1.0) {
        return Err(Error::InvalidArgument(format!("C_budget = {c_budget} < 1")));
    }
    let samples = ball_samples(w, fam)?;
    let passes = |eps: f64| rh_from_samples(&samples, fam, eps, c_budget).pass;
    if passes(EPS_CAP) {
        return Ok(EPS_CAP);
    }
    if !passes(EPS_MIN) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (EPS_MIN, EPS_CAP);
    while hi - lo > EPS_TOL {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `(fint w)(fint w^{−1/(p−1)})^{p−1}` on one ball's samples, with the number
/// of samples clamped to `AP_FLOOR`.
pub fn ap_product(values: &[f64], p: f64) -> (f64, usize) {
    let n = values.len() as f64;
    let clamped = values.iter().filter(|&&v| v < AP_FLOOR).count();
    let m = values.iter().copied().fold(AP_FLOOR, f64::max);
    let s = 1.0 / (p - 1.0);
    let mean1 = values.iter().map(|&v| v.max(AP_FLOOR) / m).sum::<f64>() / n;
    // log of the mean of (w/m)^{−s}, via log-sum-exp
    let logs: Vec<f64> = values.iter().map(|&v| -s * (v.max(AP_FLOOR) / m).ln()).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln() - n.ln();
    (mean1 * ((p - 1.0) * lse).exp(), clamped)
}

pub fn ap_constant(w: &WeightField, fam: &BallFamily, p: f64) -> Result<ApCertificate> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} ≤ 1")));
    }
    let samples = ball_samples(w, fam)?;
    let per: Vec<(f64, usize)> = samples.par_iter().map(|v| ap_product(v, p)).collect();
    let vals: Vec<f64> = per.iter().map(|x| x.0).collect();
    let (i, worst) = argmax(&vals);
    // Each clamped cell is counted once even if several balls contain it.
    let floor_cells = w
        .w
        .active_indices()
        .filter(|&k| w.w.values[k] < AP_FLOOR)
        .count();
    Ok(ApCertificate {
        p,
        constant: worst,
        worst_ball: fam.balls[i].into(),
        worst_ratio: worst,
        clamped_cells: if per.iter().any(|x| x.1 > 0) { floor_cells } else { 0 },
        family: fam.into(),
    })
}

/// `A_p` constants over the fixed exponent ladder.
pub fn ap_ladder(w: &WeightField, fam: &BallFamily) -> Result<Vec<ApCertificate>> {
    AP_LADDER.iter().map(|&p| ap_constant(w, fam, p)).collect()
}

/// An `A_p` constant tracked across grid refinements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApRefinement {
    pub p: f64,
    pub hs: Vec<f64>,
    pub constants: Vec<f64>,
    /// Ratio of the last two constants.
    pub growth: f64,
    pub divergent: bool,
}

/// Samples `weight` on `[lo, hi]²` (cells where `inside` holds) at each `h`,
/// builds the family `𝓑_t` with `radii`, and compares the `A_p` constants.
#[allow(clippy::too_many_arguments)]
pub fn ap_refinement_study(
    weight: impl Fn([f64; 2]) -> f64 + Sync,
    inside: impl Fn([f64; 2]) -> bool + Sync,
    lo: f64,
    hi: f64,
    hs: &[f64],
    t: f64,
    radii: &[f64],
    p: f64,
) -> Result<ApRefinement> {
    if hs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two grid sizes".into()));
    }
    let mut constants = Vec::with_capacity(hs.len());
    for &h in hs {
        let grid = Grid2::square_masked(lo, hi, h, &inside);
        let w = WeightField::from_fn(&grid, &weight)?;
        let fam = ball_family(&grid, t, radii)?;
        constants.push(ap_constant(&w, &fam, p)?.constant);
    }
    let n = constants.len();
    let growth = constants[n - 1] / constants[n - 2];
    Ok(ApRefinement {
        p,
        hs: hs.to_vec(),
        growth,
        divergent: !(growth <= DIVERGENCE_GROWTH) || !constants[n - 1].is_finite(),
        constants,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    /// Sup of `μ(3B)/μ(B)` over balls with `μ(B) > 0`.
    pub sup_ratio: f64,
    pub worst_ball: Option<BallRecord>,
    /// Balls with `μ(B) = 0`; evidence for the zero branch of the dichotomy.
    pub zero_balls: Vec<BallRecord>,
    pub family: FamilySummary,
}

/// `μ(3B)/μ(B)` for one ball; `None` when `μ(B) = 0`.
pub fn doubling_ratio(w: &WeightField, ball: &Ball) -> Option<f64> {
    let mb = w.measure(&w.cells(ball));
    let m3 = w.measure(&w.cells(&ball.dilate(3.0)));
    (mb > 0.0).then(|| m3 / mb)
}

pub fn doubling_check(w: &WeightField, fam: &BallFamily) -> Result<DoublingReport> {
    if !(fam.t >= 8.0) {
        return Err(Error::InvalidArgument(format!("doubling needs t ≥ 8, got {}", fam.t)));
    }
    if fam.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let ratios: Vec<Option<f64>> = fam.balls.par_iter().map(|b| doubling_ratio(w, b)).collect();
    let vals: Vec<f64> = ratios.iter().map(|r| r.unwrap_or(f64::NEG_INFINITY)).collect();
    let (i, sup) = argmax(&vals);
    let zero_balls = fam
        .balls
        .iter()
        .zip(&ratios)
        .filter(|(_, r)| r.is_none())
        .map(|(b, _)| BallRecord::from(*b))
        .collect();
    Ok(DoublingReport {
        sup_ratio: if sup.is_finite() { sup } else { 0.0 },
        worst_ball: sup.is_finite().then(|| fam.balls[i].into()),
        zero_balls,
        family: fam.into(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureComparison {
    pub mu_a: f64,
    pub mu_b: f64,
    pub fraction: f64,
    /// `C (|A|/|B|)^{ε/(1+ε)} μ(B)`.
    pub bound: f64,
    pub pass: bool,
}

/// Relative slack for rounding when comparing `μ(A)` with its bound.
const COMPARISON_ROUNDING: f64 = 1e-12;

/// Evaluates `μ(A) ≤ C (|A|/|B|)^{ε/(1+ε)} μ(B)`, with `A` a set of cells
/// inside `B`.
pub fn measure_comparison_check(
    w: &WeightField,
    ball: &Ball,
    a: &[usize],
    epsilon: f64,
    c: f64,
) -> Result<MeasureComparison> {
    let cells = w.cells(ball);
    if cells.is_empty() {
        return Err(Error::EmptyBall {
            center: ball.center,
            radius: ball.radius,
        });
    }
    let mut in_b = vec![false; w.grid().len()];
    for &k in &cells {
        in_b[k] = true;
    }
    if let Some(&k) = a.iter().find(|&&k| k >= in_b.len() || !in_b[k]) {
        return Err(Error::InvalidArgument(format!("cell {k} of A is not in B")));
    }
    let mu_a = w.measure(a);
    let mu_b = w.measure(&cells);
    let fraction = a.len() as f64 / cells.len() as f64;
    let bound = c * fraction.powf(epsilon / (1.0 + epsilon)) * mu_b;
    Ok(MeasureComparison {
        mu_a,
        mu_b,
        fraction,
        bound,
        pass: mu_a <= bound * (1.0 + COMPARISON_ROUNDING),
    })
}

/// The doubling constant obtained from `RH(ε, C)` by following the
/// measure-comparison and small-set arguments: for `α ∈ (0, 1)`,
/// `β = 1 − ((1 − α)/C)^{(1+ε)/ε}`, `λ² = (1 + β)/(2β)`, then
/// `μ(3B) ≤ α^{−k} μ(B)` with `λ^k ≥ 3`. Minimised over a grid of `α`.
pub fn doubling_chain_constant(epsilon: f64, c: f64) -> f64 {
    let delta = epsilon / (1.0 + epsilon);
    (1..1000)
        .map(|i| i as f64 / 1000.0)
        .map(|alpha: f64| {
            let beta = 1.0 - ((1.0 - alpha) / c).powf(1.0 / delta);
            let lambda = ((1.0 + beta) / (2.0 * beta)).sqrt();
            let k = (3f64.ln() / lambda.ln()).ceil();
            alpha.powf(-k)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeMoment {
    pub value: f64,
    pub clamped_cell_count: usize,
}

/// `Σ max(f, MOMENT_FLOOR)^{−ε} h²` over active cells in `region`.
pub fn negative_moment(f: &ScalarField, region: &[bool], epsilon: f64) -> Result<NegativeMoment> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("ε = {epsilon} ≤ 0")));
    }
    let mut value = 0.0;
    let mut clamped = 0;
    for k in f.active_indices().filter(|&k| region[k]) {
        let v = f.values[k];
        if v < MOMENT_FLOOR {
            clamped += 1;
        }
        value += v.max(MOMENT_FLOOR).powf(-epsilon);
    }
    Ok(NegativeMoment {
        value: value * f.grid.cell_area(),
        clamped_cell_count: clamped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `w ≡ 0` on the mask.
    Zero,
    PositiveAe,
    /// A partially vanishing ball on which the claimed inequality holds.
    RhViolation,
    /// The claimed inequality fails and no partially vanishing ball passes it.
    Inconclusive,
}

/// A ball on which the measure comparison fails for `A = B ∖ Z`, where `Z`
/// is the zero set: `μ(A) = μ(B)` but the bound is `C (1 − f)^{ε/(1+ε)} μ(B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbWitness {
    pub ball: BallRecord,
    pub zero_fraction: f64,
    pub comparison: MeasureComparison,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub verdict: Verdict,
    pub rh: Option<RHCertificate>,
    pub max_zero_fraction: f64,
    /// Grid-scale zero fraction below which a ball counts as zero-free.
    pub zero_threshold_per_radius: Vec<(f64, f64)>,
    /// A partially vanishing family ball on which the inequality holds.
    pub partial_zero_ball: Option<BallRecord>,
    pub witness: Option<AbWitness>,
}

fn grid_zero_threshold(h: f64, r: f64) -> f64 {
    2.0 * h / r
}

/// Zero or positive almost everywhere, given a claimed `RH(ε, C)` on `fam`.
pub fn dichotomy_audit(w: &WeightField, fam: &BallFamily, epsilon: f64, c: f64) -> Result<DichotomyReport> {
    let grid = w.grid();
    let h = grid.h;
    let thresholds: Vec<(f64, f64)> = fam.radii.iter().map(|&r| (r, grid_zero_threshold(h, r))).collect();
    let any_positive = w.w.active_indices().any(|k| w.w.values[k] > 0.0);
    if !any_positive {
        return Ok(DichotomyReport {
            verdict: Verdict::Zero,
            rh: None,
            max_zero_fraction: 1.0,
            zero_threshold_per_radius: thresholds,
            partial_zero_ball: None,
            witness: None,
        });
    }
    let cut = w.zero_threshold();
    let is_zero = |k: usize| w.w.values[k] <= cut;
    let samples = ball_samples(w, fam)?;
    let rh = rh_from_samples(&samples, fam, epsilon, c);
    let per_ball: Vec<(f64, f64)> = fam
        .balls
        .par_iter()
        .zip(&samples)
        .map(|(b, v)| {
            let cells = w.cells(b);
            let zeros = cells.iter().filter(|&&k| is_zero(k)).count();
            (zeros as f64 / cells.len() as f64, rh_ratio(v, epsilon))
        })
        .collect();
    let max_zero_fraction = per_ball.iter().map(|x| x.0).fold(0.0, f64::max);
    let partial = fam
        .balls
        .iter()
        .zip(&per_ball)
        .find(|(_, (f, ratio))| *f >= PARTIAL_ZERO_FRACTION && *f < 1.0 && *ratio <= c)
        .map(|(b, _)| BallRecord::from(*b));
    let zero_free = fam
        .balls
        .iter()
        .zip(&per_ball)
        .all(|(b, (f, _))| *f < grid_zero_threshold(h, b.radius));
    let verdict = if partial.is_some() {
        Verdict::RhViolation
    } else if rh.pass && zero_free {
        Verdict::PositiveAe
    } else {
        Verdict::Inconclusive
    };
    let witness = if verdict == Verdict::RhViolation {
        ab_witness(w, fam, epsilon, c, &is_zero)?
    } else {
        None
    };
    Ok(DichotomyReport {
        verdict,
        rh: Some(rh),
        max_zero_fraction,
        zero_threshold_per_radius: thresholds,
        partial_zero_ball: partial,
        witness,
    })
}

/// Searches for a ball `B` with `tB` in the mask on which the measure
/// comparison with `A = B ∖ Z` fails: first the family itself, then balls
/// centred at every zero cell with radius equal to the distance to the
/// nearest positive cell, so that `B` is almost entirely inside `Z`.
fn ab_witness(
    w: &WeightField,
    fam: &BallFamily,
    epsilon: f64,
    c: f64,
    is_zero: &(dyn Fn(usize) -> bool + Sync),
) -> Result<Option<AbWitness>> {
    let grid = w.grid();
    let h = grid.h;
    let r_max = fam.radii.iter().copied().fold(0.0, f64::max);
    let r_min = fam.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let dist = ComplementDistance::new(grid).per_cell();
    let reach = (r_max / h).ceil() as isize + 1;
    let mut candidates = fam.balls.clone();
    for k in 0..grid.len() {
        if !w.w.active[k] || !is_zero(k) {
            continue;
        }
        let ck = grid.center(k);
        let mut nearest = f64::INFINITY;
        for dj in -reach..=reach {
            for di in -reach..=reach {
                if let Some(n) = grid.offset(k, di, dj) {
                    if w.w.active[n] && !is_zero(n) {
                        let cn = grid.center(n);
                        nearest = nearest.min((cn[0] - ck[0]).hypot(cn[1] - ck[1]));
                    }
                }
            }
        }
        if nearest.is_finite() && nearest >= 0.5 * r_min && fam.t * nearest <= dist[k] {
            candidates.push(Ball::new(ck, nearest));
        }
    }
    let evaluated: Vec<Option<AbWitness>> = candidates
        .par_iter()
        .map(|b| {
            let cells = w.cells(b);
            if cells.is_empty() {
                return None;
            }
            let a: Vec<usize> = cells.iter().copied().filter(|&k| !is_zero(k)).collect();
            let zero_fraction = 1.0 - a.len() as f64 / cells.len() as f64;
            let cmp = measure_comparison_check(w, b, &a, epsilon, c).ok()?;
            (cmp.mu_b > 0.0 && !cmp.pass).then(|| AbWitness {
                ball: (*b).into(),
                zero_fraction,
                comparison: cmp,
            })
        })
        .collect();
    // Strongest violation, lowest index on ties.
    Ok(evaluated
        .into_iter()
        .flatten()
        .fold(None, |best: Option<AbWitness>, cand| match &best {
            Some(b) if b.comparison.mu_a / b.comparison.bound >= cand.comparison.mu_a / cand.comparison.bound => best,
            _ => Some(cand),
        }))
}
