//! Finite differences for `det D²φ = g`, `φ = 0` on `∂O`.
//!
//! Second differences along lattice directions use the true distance to the
//! boundary when a neighbour falls outside the domain, so every stencil is
//! exact on quadratics. The mixed derivative is `(D_{(1,1)} − D_{(1,−1)})/2`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ConvexDomain, DensityField, MASolution, SolverReport};
use crate::error::{Error, Result};
use crate::field::{Field, Grid2};
use crate::matalg::{sym_eigen, Mat2};

/// Smallest boundary distance as a fraction of the lattice step.
const MIN_CROSSING: f64 = 1e-6;
pub const HESSIAN_CLAMP: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub stall_window: usize,
    /// Newton stalls when the residual falls by less than this fraction over
    /// `stall_window` steps.
    pub stall_reduction: f64,
    pub allow_unnormalized: bool,
    pub force_monotone: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 500,
            stall_window: 20,
            stall_reduction: 0.01,
            allow_unnormalized: false,
            force_monotone: false,
        }
    }
}

/// `a₀ φ_k + a₊ φ₊ + a₋ φ₋`; `None` marks a boundary point where `φ = 0`.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    center: f64,
    plus: (Option<usize>, f64),
    minus: (Option<usize>, f64),
}

impl Stencil {
    #[inline]
    fn apply(&self, k: usize, phi: &[f64]) -> f64 {
        let v = |(i, a): (Option<usize>, f64)| i.map_or(0.0, |i| a * phi[i]);
        self.center * phi[k] + v(self.plus) + v(self.minus)
    }

    fn push(&self, row: usize, scale: f64, out: &mut Vec<(usize, usize, f64)>) {
        out.push((row, row, scale * self.center));
        for (i, a) in [self.plus, self.minus] {
            if let Some(i) = i {
                out.push((row, i, scale * a));
            }
        }
    }
}

/// Lattice directions: axes, diagonals, and the knight moves of the wide
/// stencil.
pub(crate) const DIRS: [(isize, isize); 8] = [
    (1, 0),
    (0, 1),
    (1, 1),
    (1, -1),
    (2, 1),
    (-1, 2),
    (1, 2),
    (-2, 1),
];
/// Orthogonal direction pairs for the monotone scheme.
const FRAMES: [(usize, usize); 4] = [(0, 1), (2, 3), (4, 5), (6, 7)];

pub(crate) struct Discretization {
    pub grid: Grid2,
    /// Unknown → grid cell.
    pub cells: Vec<usize>,
    second: Vec<[Stencil; 8]>,
    first: Vec<[Stencil; 2]>,
}

impl Discretization {
    pub fn new(dom: &ConvexDomain) -> Self {
        let grid = dom.grid.clone();
        let cells: Vec<usize> = grid.masked_indices().collect();
        let mut unknown = vec![None; grid.len()];
        for (u, &k) in cells.iter().enumerate() {
            unknown[k] = Some(u);
        }
        let h = grid.h;
        let neighbour = |k: usize, di: isize, dj: isize| -> (Option<usize>, f64) {
            let len = (di as f64).hypot(dj as f64) * h;
            match grid.offset(k, di, dj).and_then(|n| unknown[n]) {
                Some(u) => (Some(u), len),
                None => {
                    let c = grid.center(k);
                    let u = [di as f64 * h / len, dj as f64 * h / len];
                    let s = dom.shape.crossing(c, u, len).max(MIN_CROSSING * len);
                    (None, s)
                }
            }
        };
        let second = cells
            .par_iter()
            .map(|&k| {
                DIRS.map(|(di, dj)| {
                    let (pu, sp) = neighbour(k, di, dj);
                    let (mu, sm) = neighbour(k, -di, -dj);
                    let ap = 2.0 / (sp * (sp + sm));
                    let am = 2.0 / (sm * (sp + sm));
                    Stencil {
                        center: -(ap + am),
                        plus: (pu, ap),
                        minus: (mu, am),
                    }
                })
            })
            .collect();
        let first = cells
            .par_iter()
            .map(|&k| {
                [(1, 0), (0, 1)].map(|(di, dj)| {
                    let (pu, sp) = neighbour(k, di, dj);
                    let (mu, sm) = neighbour(k, -di, -dj);
                    let bp = sm / (sp * (sp + sm));
                    let bm = -sp / (sm * (sp + sm));
                    Stencil {
                        center: -(bp + bm),
                        plus: (pu, bp),
                        minus: (mu, bm),
                    }
                })
            })
            .collect();
        Discretization {
            grid,
            cells,
            second,
            first,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    fn d2(&self, u: usize, dir: usize, phi: &[f64]) -> f64 {
        self.second[u][dir].apply(u, phi)
    }

    pub fn hessian(&self, u: usize, phi: &[f64]) -> Mat2 {
        let a = self.d2(u, 0, phi);
        let b = self.d2(u, 1, phi);
        let c = 0.5 * (self.d2(u, 2, phi) - self.d2(u, 3, phi));
        Mat2::new(a, c, c, b)
    }

    pub fn gradient(&self, u: usize, phi: &[f64]) -> [f64; 2] {
        [self.first[u][0].apply(u, phi), self.first[u][1].apply(u, phi)]
    }

    /// `min` over frames of `max(D_vv, 0)·max(D_ww, 0)` and the minimising frame.
    fn monotone_det(&self, u: usize, phi: &[f64]) -> (f64, usize) {
        FRAMES
            .iter()
            .enumerate()
            .map(|(f, &(a, b))| (self.d2(u, a, phi).max(0.0) * self.d2(u, b, phi).max(0.0), f))
            .fold((f64::INFINITY, 0), |acc, v| if v.0 < acc.0 { v } else { acc })
    }

    fn laplacian_rows(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.len() * 5);
        for u in 0..self.len() {
            self.second[u][0].push(u, 1.0, &mut t);
            self.second[u][1].push(u, 1.0, &mut t);
        }
        t
    }
}

fn sparse_solve(n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
    let t: Vec<Triplet<usize, usize, f64>> = triplets.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &t)
        .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::LinearSolve("non-finite solution".into()))
    }
}

/// Eigenvalues clamped from below.
fn clamp_psd(m: Mat2, floor: f64) -> Mat2 {
    let s = sym_eigen(m);
    let (c, sn) = (s.theta.cos(), s.theta.sin());
    let l1 = s.lam1.max(floor);
    let l2 = s.lam2.max(floor);
    // R diag(l1, l2) Rᵀ
    Mat2::new(
        l1 * c * c + l2 * sn * sn,
        (l1 - l2) * c * sn,
        (l1 - l2) * c * sn,
        l1 * sn * sn + l2 * c * c,
    )
}

struct Problem<'a> {
    disc: &'a Discretization,
    g: Vec<f64>,
}

impl Problem<'_> {
    fn residual(&self, phi: &[f64]) -> Vec<f64> {
        (0..self.disc.len())
            .into_par_iter()
            .map(|u| self.disc.hessian(u, phi).det() - self.g[u])
            .collect()
    }

    fn residual_monotone(&self, phi: &[f64]) -> Vec<f64> {
        (0..self.disc.len())
            .into_par_iter()
            .map(|u| self.disc.monotone_det(u, phi).0 - self.g[u])
            .collect()
    }

    fn newton_matrix(&self, phi: &[f64]) -> Vec<(usize, usize, f64)> {
        let d = self.disc;
        let rows: Vec<Vec<(usize, usize, f64)>> = (0..d.len())
            .into_par_iter()
            .map(|u| {
                let hp = clamp_psd(d.hessian(u, phi), HESSIAN_CLAMP);
                // cof(H⁺) : dH with dH₁₂ = (dD₊ − dD₋)/2.
                let mut t = Vec::with_capacity(9);
                d.second[u][0].push(u, hp.m22, &mut t);
                d.second[u][1].push(u, hp.m11, &mut t);
                d.second[u][2].push(u, -hp.m12, &mut t);
                d.second[u][3].push(u, hp.m12, &mut t);
                t
            })
            .collect();
        rows.concat()
    }

    fn monotone_matrix(&self, phi: &[f64]) -> Vec<(usize, usize, f64)> {
        let d = self.disc;
        let rows: Vec<Vec<(usize, usize, f64)>> = (0..d.len())
            .into_par_iter()
            .map(|u| {
                let (_, f) = d.monotone_det(u, phi);
                let (a, b) = FRAMES[f];
                let da = d.d2(u, a, phi).max(HESSIAN_CLAMP);
                let db = d.d2(u, b, phi).max(HESSIAN_CLAMP);
                let mut t = Vec::with_capacity(5);
                d.second[u][a].push(u, db, &mut t);
                d.second[u][b].push(u, da, &mut t);
                t
            })
            .collect();
        rows.concat()
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

enum Outcome {
    Converged,
    Stalled,
    MaxIter,
}

/// Damped Newton iteration on `F(φ) = 0`; the step is halved until the sup
/// norm of the residual decreases.
#[allow(clippy::too_many_arguments)]
fn damped_newton(
    phi: &mut Vec<f64>,
    residual: &dyn Fn(&[f64]) -> Vec<f64>,
    matrix: &dyn Fn(&[f64]) -> Vec<(usize, usize, f64)>,
    opts: &SolveOptions,
    iterations: &mut usize,
    history: &mut Vec<f64>,
    budget: usize,
) -> Result<Outcome> {
    let n = phi.len();
    let mut f = residual(phi);
    let mut res = sup(&f);
    history.push(res);
    for _ in 0..budget {
        if res <= opts.tol {
            return Ok(Outcome::Converged);
        }
        let w = opts.stall_window;
        if history.len() > w && history[history.len() - 1] > (1.0 - opts.stall_reduction) * history[history.len() - 1 - w] {
            return Ok(Outcome::Stalled);
        }
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let delta = sparse_solve(n, &matrix(phi), &rhs)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1.0 / 1024.0 {
            let trial: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + alpha * d).collect();
            let ft = residual(&trial);
            let rt = sup(&ft);
            if rt < res {
                *phi = trial;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        *iterations += 1;
        history.push(res);
        if !accepted {
            return Ok(Outcome::Stalled);
        }
    }
    Ok(if res <= opts.tol {
        Outcome::Converged
    } else {
        Outcome::MaxIter
    })
}

/// Solves `det D²φ = g` in `O`, `φ = 0` on `∂O`.
pub fn solve_ma(dom: &ConvexDomain, g: &DensityField, opts: &SolveOptions) -> Result<MASolution> {
    if !opts.allow_unnormalized && !dom.is_normalized() {
        return Err(Error::Domain("domain is not normalized: need B₁(0) ⊂ O ⊂ B₂(0)".into()));
    }
    if g.g.grid.nx != dom.grid.nx || g.g.grid.ny != dom.grid.ny || g.g.grid.h != dom.grid.h {
        return Err(Error::Domain("density grid differs from domain grid".into()));
    }
    let disc = Discretization::new(dom);
    if disc.len() == 0 {
        return Err(Error::Domain("empty domain".into()));
    }
    if let Some(&k) = disc.cells.iter().find(|&&k| !g.g.active[k]) {
        return Err(Error::Domain(format!("density missing at cell {k}")));
    }
    let prob = Problem {
        disc: &disc,
        g: disc.cells.iter().map(|&k| g.g.values[k]).collect(),
    };
    // Poisson start: Δφ₀ = 2√g.
    let rhs: Vec<f64> = prob.g.iter().map(|v| 2.0 * v.sqrt()).collect();
    let mut phi = sparse_solve(disc.len(), &disc.laplacian_rows(), &rhs)?;

    let mut iterations = 0;
    let mut history = Vec::new();
    let mut method = "newton";
    let mut outcome = Outcome::Stalled;
    if !opts.force_monotone {
        outcome = damped_newton(
            &mut phi,
            &|p| prob.residual(p),
            &|p| prob.newton_matrix(p),
            opts,
            &mut iterations,
            &mut history,
            opts.max_iter,
        )?;
    }
    if matches!(outcome, Outcome::Stalled) {
        method = "monotone";
        history.clear();
        let budget = opts.max_iter.saturating_sub(iterations).max(opts.stall_window + 1);
        outcome = damped_newton(
            &mut phi,
            &|p| prob.residual_monotone(p),
            &|p| prob.monotone_matrix(p),
            opts,
            &mut iterations,
            &mut history,
            budget,
        )?;
    }
    let final_res = if method == "newton" {
        prob.residual(&phi)
    } else {
        prob.residual_monotone(&phi)
    };
    let report = SolverReport {
        iterations,
        residual_norm: sup(&final_res),
        method: method.to_string(),
        converged: matches!(outcome, Outcome::Converged),
        threads: rayon::current_num_threads(),
        tol: opts.tol,
    };
    let sol = assemble(&disc, &phi, &final_res, g.lambda, report);
    if sol.report.converged {
        Ok(sol)
    } else {
        Err(Error::NoConvergence {
            iterations: sol.report.iterations,
            residual: sol.report.residual_norm,
            best: Box::new(sol),
        })
    }
}

fn assemble(disc: &Discretization, phi: &[f64], res: &[f64], lambda: f64, report: SolverReport) -> MASolution {
    let grid = &disc.grid;
    let n = grid.len();
    let mut phi_v = vec![0.0; n];
    let mut grad = vec![[0.0; 2]; n];
    let mut hess = vec![Mat2::ZERO; n];
    let mut resid = vec![0.0; n];
    for (u, &k) in disc.cells.iter().enumerate() {
        phi_v[k] = phi[u];
        grad[k] = disc.gradient(u, phi);
        hess[k] = disc.hessian(u, phi);
        resid[k] = res[u];
    }
    let active = grid.mask.clone();
    MASolution {
        phi: Field::from_parts(grid.clone(), phi_v, active.clone()),
        grad_phi: Field::from_parts(grid.clone(), grad, active.clone()),
        hess_phi: Field::from_parts(grid.clone(), hess, active.clone()),
        residual: Field::from_parts(grid.clone(), resid, active),
        lambda,
        report,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_exact_on_quadratics() {
        let dom = ConvexDomain::ellipse(1.3, 0.8, 1.0 / 16.0);
        let disc = Discretization::new(&dom);
        // q vanishes on the ellipse, so boundary values are exactly 0.
        let q = |p: [f64; 2]| (p[0] / 1.3).powi(2) + (p[1] / 0.8).powi(2) - 1.0;
        let phi: Vec<f64> = disc.cells.iter().map(|&k| q(dom.grid.center(k))).collect();
        let want = Mat2::diag(2.0 / 1.69, 2.0 / 0.64);
        for u in 0..disc.len() {
            assert!((disc.hessian(u, &phi) - want).max_abs() < 1e-8);
            let c = dom.grid.center(disc.cells[u]);
            let gr = disc.gradient(u, &phi);
            assert!((gr[0] - 2.0 * c[0] / 1.69).abs() < 1e-9);
            assert!((gr[1] - 2.0 * c[1] / 0.64).abs() < 1e-9);
        }
    }

    #[test]
    fn psd_clamp() {
        let m = Mat2::new(1.0, 2.0, 2.0, 1.0);
        let c = clamp_psd(m, 1e-8);
        let s = sym_eigen(c);
        assert!((s.lam1 - 3.0).abs() < 1e-12 && (s.lam2 - 1e-8).abs() < 1e-12);
        assert!((clamp_psd(Mat2::diag(2.0, 5.0), 1e-8) - Mat2::diag(2.0, 5.0)).max_abs() < 1e-14);
    }

    #[test]
    fn sparse_solver_sums_duplicates() {
        let t = [(0, 0, 1.0), (0, 0, 1.0), (1, 1, 4.0), (0, 1, 1.0)];
        let x = sparse_solve(2, &t, &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }
}
