//! The ε-integrability chain: reverse Hölder for `w = dist(Du, 𝒮)` on
//! `Φ₂(Z₄)`, the lower bound `∫_B w ≥ c₂` on a cover of `Φ₂(Z₂)`, and
//! `∫_{Z₂} |D²φ|^{1+q} ≤ C ∫_{Φ₂(Z₂)} w^{−q}` at `q = ε`.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{comparability_check, minty_pair_fields, ComparabilityBounds, Convention, TransformedMap, SWEEP_POINTS};
use crate::error::{Error, Result};
use crate::field::{ball_family, for_each_cell_in_ball, Ball, Field, Grid2};
use crate::mongeampere::{boundary_cells, hessian_integrability, section, section_separation, MASolution};
use crate::weights::{
    estimate_rh_exponent, negative_moment, reverse_holder_check, BallRecord, RHCertificate, WeightField, EPS_MIN,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    /// Dilation of the reverse Hölder family.
    pub rh_t: f64,
    /// Reverse Hölder radii in units of the `Ω` spacing.
    pub rh_radii_cells: Vec<f64>,
    /// Smallest cover radius in units of the `Ω` spacing.
    pub rho_floor_cells: f64,
    /// Samples for the comparability bounds.
    pub sweep_points: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            rh_t: 2.0,
            rh_radii_cells: vec![3.0, 6.0, 12.0],
            rho_floor_cells: 2.0,
            sweep_points: SWEEP_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub kind: String,
    pub pass: bool,
    pub value: f64,
    pub bound: Option<f64>,
    pub witness: Option<BallRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Certificate {
    ReverseHolder(RHCertificate),
    Check(CheckRecord),
}

impl Certificate {
    pub fn kind(&self) -> &str {
        match self {
            Certificate::ReverseHolder(_) => "reverse_holder",
            Certificate::Check(c) => &c.kind,
        }
    }

    pub fn pass(&self) -> bool {
        match self {
            Certificate::ReverseHolder(c) => c.pass,
            Certificate::Check(c) => c.pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub epsilon: f64,
    #[serde(rename = "C_budget")]
    pub c_budget: f64,
    /// `∫_{Φ₂(Z₂)} w^{−ε}`.
    pub neg_moment: f64,
    pub clamped_cells: usize,
    /// `∫_{Z₂} |D²φ|^{1+ε}`.
    pub hess_bound: f64,
    /// `2 (max r)^ε`, with `r` the comparability ratio on `Z₂`.
    pub thirdd_constant: f64,
    /// Least `∫_B w` over the cover of `Φ₂(Z₂)`.
    pub beb_min: f64,
    pub certificates: Vec<Certificate>,
    pub pass: bool,
    pub section_separation: f64,
    /// `dist(Φ₂(Z₂), ∂Φ₂(Z₄))`.
    pub c1: f64,
    pub rho: f64,
    pub cover_size: usize,
}

impl PipelineReport {
    pub fn certificate(&self, kind: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.kind() == kind)
    }
}

pub fn epsilon_pipeline(sol: &MASolution, tm: &TransformedMap, c_budget: f64) -> Result<PipelineReport> {
    epsilon_pipeline_with(sol, tm, c_budget, &PipelineOptions::default())
}

fn min_distance(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    b.par_iter()
        .map(|q| a.iter().map(|p| (p[0] - q[0]).hypot(p[1] - q[1])).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Balls of radius `rho` centred at cells of `set`, placed in index order at
/// every cell not yet covered.
fn greedy_cover(grid: &Grid2, set: &[bool], rho: f64) -> Vec<Ball> {
    let mut covered = vec![false; grid.len()];
    let mut balls = Vec::new();
    for k in 0..grid.len() {
        if set[k] && !covered[k] {
            let b = Ball::new(grid.center(k), rho);
            for_each_cell_in_ball(grid, set, &b, |c| covered[c] = true);
            covered[k] = true;
            balls.push(b);
        }
    }
    balls
}

pub fn epsilon_pipeline_with(
    sol: &MASolution,
    tm: &TransformedMap,
    c_budget: f64,
    opts: &PipelineOptions,
) -> Result<PipelineReport> {
    let tm = tm.with_convention(Convention::Singular);
    let src = sol.grid();
    let omega = tm.grid().clone();
    let ho = omega.h;
    let (_, phi2) = minty_pair_fields(sol);
    let interior = tm.interior();
    let w = tm.distance_field().restrict(&interior);

    let z2 = section(sol, 2.0)?;
    let z4 = section(sol, 4.0)?;
    let image = |z: &[bool]| -> Vec<bool> {
        (0..omega.len())
            .map(|k| interior[k] && tm.pullback_index[k].is_some_and(|s| z[s]))
            .collect()
    };
    let img2 = image(&z2);
    let img4 = image(&z4);
    if !img2.iter().any(|&b| b) {
        return Err(Error::EmptySection);
    }

    // Reverse Hölder on 𝓑_t(Φ₂(Z₄)).
    let rh_grid = omega.clone().with_mask(img4.clone());
    let wf = WeightField::new(Field::from_parts(rh_grid.clone(), w.values.clone(), img4))?;
    let radii: Vec<f64> = opts.rh_radii_cells.iter().map(|c| c * ho).collect();
    let fam = ball_family(&rh_grid, opts.rh_t, &radii)?;
    if fam.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let epsilon = estimate_rh_exponent(&wf, &fam, c_budget)?;
    let rh = reverse_holder_check(&wf, &fam, epsilon.max(EPS_MIN), c_budget)?;

    // Separation of the images of the sections.
    let delta = section_separation(sol)?;
    let inner: Vec<[f64; 2]> = (0..src.len()).filter(|&k| z2[k]).map(|k| phi2.values[k]).collect();
    let outer: Vec<[f64; 2]> = boundary_cells(src, &z4).into_iter().map(|k| phi2.values[k]).collect();
    let c1 = min_distance(&inner, &outer);
    let sep_bound = delta / SQRT_2 - tm.tol.resampling;

    // Comparability ratio on Z₂.
    let bounds = ComparabilityBounds::sweep(sol.lambda.max(1.0), opts.sweep_points);
    let comp = comparability_check(sol, &tm, &bounds)?;
    let (mut r_min, mut r_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in comp.ratio.active_indices().filter(|&k| z2[k]) {
        r_min = r_min.min(comp.ratio.values[k]);
        r_max = r_max.max(comp.ratio.values[k]);
    }
    if !r_min.is_finite() {
        return Err(Error::Degenerate("no comparability ratio on Z₂".into()));
    }

    // Lower bound ∫_B w ≥ (min r / 2)|Φ₂⁻¹(B)| on the cover.
    let rho = (c1 / 64.0).max(opts.rho_floor_cells * ho);
    let cover = greedy_cover(&omega, &img2, rho);
    let cell_o = ho * ho;
    let cell_s = src.h * src.h;
    let per_ball: Vec<(f64, f64)> = cover
        .par_iter()
        .map(|b| {
            let mut integral = 0.0;
            for_each_cell_in_ball(&omega, &w.active, b, |k| integral += w.values[k]);
            let pre = phi2.active_indices().filter(|&k| b.contains(phi2.values[k])).count();
            (integral * cell_o, 0.5 * r_min * pre as f64 * cell_s)
        })
        .collect();
    let (worst, beb_min) = per_ball
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.0))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let beb_fail = per_ball.iter().position(|p| !(p.0 > 0.0 && p.0 >= p.1));
    let beb_witness = cover[beb_fail.unwrap_or(worst)];

    // Negative moment and Hessian integral at q = ε.
    let q = epsilon;
    let (neg_moment, clamped_cells) = if q > 0.0 {
        let m = negative_moment(&w, &img2, q)?;
        (m.value, m.clamped_cell_count)
    } else {
        (w.active_indices().filter(|&k| img2[k]).count() as f64 * cell_o, 0)
    };
    let hess_bound = hessian_integrability(sol, q, &z2)?;
    let thirdd_constant = 2.0 * r_max.powf(q);
    let thirdd_ratio = hess_bound / neg_moment;

    let check = |kind: &str, pass: bool, value: f64, bound: Option<f64>, witness: Option<Ball>| {
        Certificate::Check(CheckRecord {
            kind: kind.into(),
            pass,
            value,
            bound,
            witness: witness.map(BallRecord::from),
        })
    };
    let beb_pass = beb_fail.is_none();
    let thirdd_pass = thirdd_ratio <= thirdd_constant;
    let certificates = vec![
        Certificate::ReverseHolder(rh),
        check("epsilon", epsilon > 0.0, epsilon, Some(0.0), None),
        check("separation", c1 >= sep_bound, c1, Some(sep_bound), None),
        check("comparability", comp.pass, r_min, Some(bounds.c_lo * (1.0 - comp.slack)), None),
        check("comparability_max", comp.pass, r_max, Some(bounds.c_hi * (1.0 + comp.slack)), None),
        check("cover", true, cover.len() as f64, None, None),
        check("beb", beb_pass, beb_min, Some(per_ball[beb_fail.unwrap_or(worst)].1), Some(beb_witness)),
        check("thirdd", thirdd_pass, thirdd_ratio, Some(thirdd_constant), None),
    ];
    Ok(PipelineReport {
        epsilon,
        c_budget,
        neg_moment,
        clamped_cells,
        hess_bound,
        thirdd_constant,
        beb_min,
        pass: epsilon > 0.0 && beb_pass && thirdd_pass,
        certificates,
        section_separation: delta,
        c1,
        rho,
        cover_size: cover.len(),
    })
}
