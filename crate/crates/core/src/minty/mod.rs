//! The Minty correspondence `Φ₁ = (Dφ − x)/√2`, `Φ₂ = (Dφ + x)/√2`,
//! `u = Φ₁∘Φ₂⁻¹`, which turns the monotone gradient of a Monge–Ampère
//! solution into a 1-Lipschitz map whose gradient lies in the admissible set.

mod pipeline;
mod probe;
mod singular;

pub use pipeline::{epsilon_pipeline, epsilon_pipeline_with, Certificate, CheckRecord, PipelineOptions, PipelineReport};
pub use probe::{homeomorphism_probe, homeomorphism_probe_with, ProbeResult, PROBE_EXCLUSION};
pub use singular::{
    admissible_check, admissible_defect, comparability_ratio, dist_to_singular, dist_to_singular_sweep,
    envelope_inclusion_check, ComparabilityBounds, SingularSet, A0, COMPARABILITY_SLACK, SWEEP_POINTS,
    SYMMETRY_TOL,
};

use std::f64::consts::SQRT_2;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{finite_diff_gradient, interpolate, io, Field, GradientField, Grid2, ScalarField, VectorField};
use crate::matalg::Mat2;
use crate::mongeampere::MASolution;

/// Relative resampling tolerance, multiplied by the diameter of `Ω`.
pub const RESAMPLING_REL: f64 = 1e-3;
pub const ALGEBRAIC_TOL: f64 = 1e-10;
/// Barycentric coordinates down to this value count as inside a triangle.
const BARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MintyPair {
    pub phi1: VectorField,
    pub phi2: VectorField,
    /// `Ω = Φ₂(O)` as the mask of a grid with spacing `h√2(1+λ)/2`.
    pub omega_mask: Grid2,
}

/// Which side of the conjugation `v = A₀u` the map is expressed in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `u = Φ₁∘Φ₂⁻¹`, target set `𝒮`.
    #[default]
    Singular,
    /// `v = A₀u`, target set `SO(2)`.
    So2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub resampling: f64,
    pub algebraic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformedMap {
    pub u: VectorField,
    pub du: GradientField,
    /// For each `Ω` cell, the source cell whose image is nearest in the
    /// containing triangle.
    pub pullback_index: Vec<Option<usize>>,
    pub convention: Convention,
    pub tol: Tolerances,
}

impl TransformedMap {
    /// Re-expresses the map on the requested side by left multiplication
    /// with `A₀` (an involution).
    pub fn with_convention(&self, c: Convention) -> TransformedMap {
        if c == self.convention {
            return self.clone();
        }
        TransformedMap {
            u: self.u.map(|v| A0.apply(v)),
            du: self.du.map(|m| A0 * m),
            convention: c,
            ..self.clone()
        }
    }

    pub fn grid(&self) -> &Grid2 {
        &self.u.grid
    }

    /// `Ω` cells whose gradient uses central differences on both axes.
    pub fn interior(&self) -> Vec<bool> {
        erode(&self.du.grid, &self.du.active)
    }

    /// `dist(Du, 𝒮)` on the active gradient cells, in the singular convention.
    pub fn distance_field(&self) -> ScalarField {
        self.with_convention(Convention::Singular).du.map(dist_to_singular)
    }

    /// Writes `u.csv`, `du.csv` and `w.csv` (with sidecars) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::write_field(&dir.join("u.csv"), &self.u)?;
        io::write_field(&dir.join("du.csv"), &self.du)?;
        io::write_field(&dir.join("w.csv"), &self.distance_field())?;
        Ok(())
    }
}

/// Cells of `set` whose four lattice neighbours are also in `set`.
pub fn erode(grid: &Grid2, set: &[bool]) -> Vec<bool> {
    (0..grid.len())
        .map(|k| {
            set[k]
                && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .all(|&(di, dj)| grid.offset(k, di, dj).is_some_and(|n| set[n]))
        })
        .collect()
}

/// `Ω` spacing `h√2(1 + λ)/2`.
pub fn omega_spacing(h: f64, lambda: f64) -> f64 {
    h * SQRT_2 * (1.0 + lambda) / 2.0
}

pub fn minty_pair_fields(sol: &MASolution) -> (VectorField, VectorField) {
    let grid = sol.grid();
    let g = &sol.grad_phi;
    let make = |sign: f64| {
        let values = (0..grid.len())
            .map(|k| {
                let x = grid.center(k);
                let d = g.values[k];
                [(d[0] + sign * x[0]) / SQRT_2, (d[1] + sign * x[1]) / SQRT_2]
            })
            .collect();
        Field::from_parts(grid.clone(), values, g.active.clone())
    };
    (make(-1.0), make(1.0))
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Triangles `(k₀₀, k₁₀, k₁₁)` and `(k₀₀, k₁₁, k₀₁)` on every lattice square
/// with four active corners; counter-clockwise in the source.
fn lattice_triangles(grid: &Grid2, active: &[bool]) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for j in 0..grid.ny.saturating_sub(1) {
        for i in 0..grid.nx.saturating_sub(1) {
            let k00 = grid.idx(i, j);
            let k10 = grid.idx(i + 1, j);
            let k01 = grid.idx(i, j + 1);
            let k11 = grid.idx(i + 1, j + 1);
            if active[k00] && active[k10] && active[k01] && active[k11] {
                out.push([k00, k10, k11]);
                out.push([k00, k11, k01]);
            }
        }
    }
    out
}

/// Builds `Φ₁`, `Φ₂`, and `u = Φ₁∘Φ₂⁻¹` on a fresh grid covering `Φ₂(O)`.
///
/// The source lattice is split into triangles; their images under `Φ₂`
/// triangulate `Ω`, and `u` at an `Ω` cell centre is the barycentric
/// combination of `Φ₁` at the triangle's vertices. A triangle whose image is
/// not positively oriented fails the transform with its source cells.
pub fn minty_transform(sol: &MASolution) -> Result<(MintyPair, TransformedMap)> {
    let (phi1, phi2) = minty_pair_fields(sol);
    let src = sol.grid();
    let tris = lattice_triangles(src, &phi2.active);
    if tris.is_empty() {
        return Err(Error::InvalidArgument("solution has no lattice square to triangulate".into()));
    }
    let area_floor = BARY_TOL * src.h * src.h;
    let mut bad = Vec::new();
    for t in &tris {
        let [a, b, c] = t.map(|k| phi2.values[k]);
        if !(signed_area(a, b, c) > area_floor) {
            bad.extend_from_slice(t);
        }
    }
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::Resampling { cells: bad });
    }

    let pts: Vec<[f64; 2]> = phi2.active_indices().map(|k| phi2.values[k]).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let ho = omega_spacing(src.h, sol.lambda.max(1.0));
    let origin = [lo[0] - ho, lo[1] - ho];
    let nx = ((hi[0] - lo[0]) / ho).ceil() as usize + 2;
    let ny = ((hi[1] - lo[1]) / ho).ceil() as usize + 2;
    let mut omega = Grid2::new(nx, ny, ho, origin);
    let diam = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);

    let mut u = vec![[0.0; 2]; omega.len()];
    let mut pull = vec![None; omega.len()];
    for t in &tris {
        let p = t.map(|k| phi2.values[k]);
        let area = signed_area(p[0], p[1], p[2]);
        let xs = [p[0][0], p[1][0], p[2][0]];
        let ys = [p[0][1], p[1][1], p[2][1]];
        let i0 = ((xs.iter().cloned().fold(f64::INFINITY, f64::min) - origin[0]) / ho - 0.5).ceil().max(0.0) as usize;
        let i1 = ((xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - origin[0]) / ho - 0.5).floor() as isize;
        let j0 = ((ys.iter().cloned().fold(f64::INFINITY, f64::min) - origin[1]) / ho - 0.5).ceil().max(0.0) as usize;
        let j1 = ((ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - origin[1]) / ho - 0.5).floor() as isize;
        if i1 < 0 || j1 < 0 {
            continue;
        }
        for j in j0..=(j1 as usize).min(ny - 1) {
            for i in i0..=(i1 as usize).min(nx - 1) {
                let k = omega.idx(i, j);
                if pull[k].is_some() {
                    continue;
                }
                let z = omega.center_ij(i, j);
                let b = [
                    signed_area(z, p[1], p[2]) / area,
                    signed_area(p[0], z, p[2]) / area,
                    signed_area(p[0], p[1], z) / area,
                ];
                if b.iter().all(|&v| v >= -BARY_TOL) {
                    let f = t.map(|k| phi1.values[k]);
                    u[k] = [
                        b[0] * f[0][0] + b[1] * f[1][0] + b[2] * f[2][0],
                        b[0] * f[0][1] + b[1] * f[1][1] + b[2] * f[2][1],
                    ];
                    let m = (0..3).fold(0, |m, v| if b[v] > b[m] { v } else { m });
                    pull[k] = Some(t[m]);
                }
            }
        }
    }
    omega.mask = pull.iter().map(Option::is_some).collect();
    let u = Field::from_parts(omega.clone(), u, omega.mask.clone());
    let du = finite_diff_gradient(&u);
    Ok((
        MintyPair {
            phi1,
            phi2,
            omega_mask: omega,
        },
        TransformedMap {
            u,
            du,
            pullback_index: pull,
            convention: Convention::Singular,
            tol: Tolerances {
                resampling: RESAMPLING_REL * diam,
                algebraic: ALGEBRAIC_TOL,
            },
        },
    ))
}

/// Summary of the pointwise properties of `Du` on interior `Ω` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub cells: usize,
    pub max_asymmetry: f64,
    /// `max |Du|`.
    pub lipschitz: f64,
    pub max_admissible_defect: f64,
    /// Cells whose symmetric part passes `admissible_check`.
    pub admissible_cells: usize,
    /// Cells whose symmetric part passes `admissible_check` but fails
    /// `envelope_inclusion_check`.
    pub chain_failures: Vec<usize>,
}

impl InclusionReport {
    /// Symmetry within `10·tol`, `|Du| ≤ 1 + tol`, admissibility defect within
    /// `tol`, and no admissible cell outside the envelope.
    pub fn pass(&self, tol: f64) -> bool {
        self.max_asymmetry <= 10.0 * tol
            && self.lipschitz <= 1.0 + tol
            && self.max_admissible_defect <= tol
            && self.chain_failures.is_empty()
    }
}

pub fn inclusion_report(tm: &TransformedMap, lambda: f64) -> InclusionReport {
    let tm = tm.with_convention(Convention::Singular);
    let cells: Vec<usize> = {
        let int = tm.interior();
        (0..int.len()).filter(|&k| int[k]).collect()
    };
    let per: Vec<(f64, f64, f64, bool, bool)> = cells
        .par_iter()
        .map(|&k| {
            let a = tm.du.values[k];
            let s = a.sym_part();
            let adm = admissible_check(s, lambda);
            let env = !adm || envelope_inclusion_check(s, lambda);
            (a.asymmetry(), a.norm(), admissible_defect(a, lambda), adm, env)
        })
        .collect();
    InclusionReport {
        cells: cells.len(),
        max_asymmetry: per.iter().map(|p| p.0).fold(0.0, f64::max),
        lipschitz: per.iter().map(|p| p.1).fold(0.0, f64::max),
        max_admissible_defect: per.iter().map(|p| p.2).fold(0.0, f64::max),
        admissible_cells: per.iter().filter(|p| p.3).count(),
        chain_failures: cells.iter().zip(&per).filter(|(_, p)| !p.4).map(|(&k, _)| k).collect(),
    }
}

/// `det DΦ₂ − |D²φ|/2 = (det(D²φ + Id) − |D²φ|)/2` on every source cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetBoundReport {
    pub min_slack: f64,
    pub worst_cell: usize,
}

pub fn det_bound_report(sol: &MASolution) -> DetBoundReport {
    let hs = &sol.hess_phi;
    let (worst_cell, min_slack) = hs
        .active_indices()
        .map(|k| {
            let y = hs.values[k];
            (k, 0.5 * ((y + Mat2::IDENTITY).det() - y.norm()))
        })
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    DetBoundReport { min_slack, worst_cell }
}

/// `min (|Φ₂(x) − Φ₂(y)| − |x − y|/√2)` over random pairs of source cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub pairs: usize,
    pub min_slack: f64,
    pub worst_pair: (usize, usize),
}

pub fn expansion_report(pair: &MintyPair, pairs: usize, seed: u64) -> ExpansionReport {
    let f = &pair.phi2;
    let cells: Vec<usize> = f.active_indices().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = ((0, 0), f64::INFINITY);
    if cells.len() >= 2 {
        for _ in 0..pairs {
            let a = cells[rng.gen_range(0..cells.len())];
            let b = cells[rng.gen_range(0..cells.len())];
            if a == b {
                continue;
            }
            let (x, y) = (f.grid.center(a), f.grid.center(b));
            let (p, q) = (f.values[a], f.values[b]);
            let s = (p[0] - q[0]).hypot(p[1] - q[1]) - (x[0] - y[0]).hypot(x[1] - y[1]) / SQRT_2;
            if s < worst.1 {
                worst = ((a, b), s);
            }
        }
    }
    ExpansionReport {
        pairs,
        min_slack: worst.1,
        worst_pair: worst.0,
    }
}

/// `r(x) = dist(Du(Φ₂(x)), 𝒮)·|D²φ(x)|` on interior source cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparabilityReport {
    pub ratio: ScalarField,
    pub min: f64,
    pub max: f64,
    pub argmin: usize,
    pub argmax: usize,
    pub bounds: ComparabilityBounds,
    pub slack: f64,
    pub pass: bool,
}

/// Evaluates `r` on source cells off the boundary layer of `O` whose image
/// lies among interior `Ω` cells, with `Du` interpolated bilinearly there.
pub fn comparability_check(
    sol: &MASolution,
    tm: &TransformedMap,
    bounds: &ComparabilityBounds,
) -> Result<ComparabilityReport> {
    let tm = tm.with_convention(Convention::Singular);
    let grid = sol.grid();
    let (_, phi2) = minty_pair_fields(sol);
    let du = tm.du.restrict(&tm.interior());
    let src_int = erode(grid, &sol.hess_phi.active);
    let vals: Vec<Option<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if !src_int[k] {
                return None;
            }
            interpolate(&du, phi2.values[k]).map(|a| dist_to_singular(a) * sol.hess_phi.values[k].norm())
        })
        .collect();
    let active: Vec<bool> = vals.iter().map(Option::is_some).collect();
    let ratio = Field::from_parts(grid.clone(), vals.iter().map(|v| v.unwrap_or(0.0)).collect(), active);
    let mut min = (0, f64::INFINITY);
    let mut max = (0, f64::NEG_INFINITY);
    for k in ratio.active_indices() {
        let v = ratio.values[k];
        if v < min.1 {
            min = (k, v);
        }
        if v > max.1 {
            max = (k, v);
        }
    }
    if ratio.active_count() == 0 {
        return Err(Error::Degenerate("no interior cell for the comparability ratio".into()));
    }
    let slack = COMPARABILITY_SLACK;
    Ok(ComparabilityReport {
        pass: bounds.contains(min.1, slack) && bounds.contains(max.1, slack),
        ratio,
        min: min.1,
        max: max.1,
        argmin: min.0,
        argmax: max.0,
        bounds: *bounds,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matalg::cayley_map;
    use crate::mongeampere::{solve_ma, ConvexDomain, DensityField, SolveOptions};

    fn quadratic() -> MASolution {
        MASolution::quadratic_fixture(Mat2::diag(3.0, 1.0 / 3.0), 1.0 / 48.0).unwrap()
    }

    #[test]
    fn radial_fixture_maps_to_zero() {
        let sol = MASolution::radial_fixture(1.0 / 32.0);
        let (pair, tm) = minty_transform(&sol).unwrap();
        for k in pair.phi1.active_indices() {
            assert!(pair.phi1.values[k][0].abs() < 1e-15 && pair.phi1.values[k][1].abs() < 1e-15);
            let x = sol.grid().center(k);
            assert!((pair.phi2.values[k][0] - SQRT_2 * x[0]).abs() < 1e-15);
        }
        for k in tm.du.active_indices() {
            assert!(tm.u.values[k][0].abs() < 1e-15);
            assert!(tm.du.values[k].max_abs() < 1e-12);
        }
        assert!((tm.grid().h - SQRT_2 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_fixture_is_cayley() {
        let sol = quadratic();
        let (_, tm) = minty_transform(&sol).unwrap();
        let expected = cayley_map(Mat2::diag(3.0, 1.0 / 3.0)).unwrap();
        assert!((expected - Mat2::diag(0.5, -0.5)).max_abs() < 1e-15);
        let int = tm.interior();
        let mut n = 0;
        for k in tm.du.active_indices().filter(|&k| int[k]) {
            assert!((tm.du.values[k] - expected).max_abs() < 1e-10, "{:?}", tm.du.values[k]);
            n += 1;
        }
        assert!(n > 100);
    }

    #[test]
    fn pullback_is_inverse_consistent() {
        let sol = quadratic();
        let (pair, tm) = minty_transform(&sol).unwrap();
        // Longest image edge: the interpolation scale.
        let h = sol.grid().h;
        let edge = (3.0f64 + 1.0) / SQRT_2 * h * SQRT_2;
        let omega = tm.grid();
        for k in omega.masked_indices() {
            let s = tm.pullback_index[k].unwrap();
            let z = omega.center(k);
            let p = pair.phi2.values[s];
            assert!((p[0] - z[0]).hypot(p[1] - z[1]) <= edge);
        }
        assert!(tm.pullback_index.iter().zip(&omega.mask).all(|(p, &m)| p.is_some() == m));
    }

    #[test]
    fn folded_source_is_rejected() {
        let mut sol = MASolution::radial_fixture(1.0 / 16.0);
        // Swap two gradients to invert the triangles around them.
        let g = sol.grid().clone();
        let a = g.nearest_cell([0.0, 0.0]).unwrap();
        let b = g.offset(a, 1, 0).unwrap();
        sol.grad_phi.values.swap(a, b);
        match minty_transform(&sol) {
            Err(Error::Resampling { cells }) => assert!(cells.contains(&a) && cells.contains(&b)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn convention_round_trip() {
        let (_, tm) = minty_transform(&quadratic()).unwrap();
        let v = tm.with_convention(Convention::So2);
        let k = tm.interior().iter().position(|&b| b).unwrap();
        assert!((v.du.values[k] - A0 * tm.du.values[k]).max_abs() < 1e-15);
        assert_eq!(v.with_convention(Convention::Singular), tm);
        // dist(A₀X, SO(2)) = dist(X, 𝒮)
        let w = v.distance_field();
        assert!((w.values[k] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn fixture_inclusions_and_ratios() {
        let bounds = ComparabilityBounds::sweep(2.0, 40_000);
        for (sol, expect) in [(MASolution::radial_fixture(1.0 / 32.0), 1.0), (quadratic(), 1.5)] {
            let (pair, tm) = minty_transform(&sol).unwrap();
            let inc = inclusion_report(&tm, sol.lambda);
            assert!(inc.pass(tm.tol.resampling), "{inc:?}");
            // λ = 1 makes the trace condition an equality; any λ > 1 is strict.
            let loose = inclusion_report(&tm, 2.0);
            assert_eq!(loose.admissible_cells, loose.cells);
            assert!(det_bound_report(&sol).min_slack >= -ALGEBRAIC_TOL);
            assert!(expansion_report(&pair, 10_000, 1).min_slack >= -ALGEBRAIC_TOL);
            let r = comparability_check(&sol, &tm, &bounds).unwrap();
            assert!((r.min - expect).abs() < 1e-9 && (r.max - expect).abs() < 1e-9, "{} {} {}", r.min, r.max, r.argmin);
            assert!(r.pass);
        }
    }

    #[test]
    fn solver_run_properties() {
        let dom = ConvexDomain::disk(1.0, 1.0 / 32.0);
        let g = DensityField::from_fn(&dom.grid, 2.0, |p| 1.0 + 0.5 * (3.0 * p[0]).sin() * p[1]).unwrap();
        let sol = solve_ma(&dom, &g, &SolveOptions::default()).unwrap();
        let (pair, tm) = minty_transform(&sol).unwrap();
        let inc = inclusion_report(&tm, 2.0);
        assert!(inc.chain_failures.is_empty());
        assert!(inc.lipschitz <= 1.0 + tm.tol.resampling, "{inc:?}");
        assert!(inc.max_asymmetry <= 10.0 * tm.tol.resampling, "{inc:?}");
        assert!(det_bound_report(&sol).min_slack >= -ALGEBRAIC_TOL);
        let e = expansion_report(&pair, 10_000, 3);
        assert!(e.min_slack >= -tm.tol.resampling, "{e:?}");
        let r = comparability_check(&sol, &tm, &ComparabilityBounds::sweep(2.0, 40_000)).unwrap();
        assert!(r.pass, "{} {}", r.min, r.max);
    }

    #[test]
    fn writes_fields() {
        let (_, tm) = minty_transform(&MASolution::radial_fixture(1.0 / 16.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        tm.write(dir.path()).unwrap();
        let w: ScalarField = io::read_field(&dir.path().join("w.csv")).unwrap();
        assert!(w.active_indices().all(|k| (w.values[k] - 1.0).abs() < 1e-12));
    }
}
