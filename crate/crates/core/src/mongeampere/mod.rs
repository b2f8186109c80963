//! The Dirichlet problem `det D²φ = g` in a convex `O`, `φ = 0` on `∂O`,
//! with `λ⁻¹ ≤ g ≤ λ`, together with sections `Z_t` and Hessian integrals.

mod density;
mod domain;
mod solver;

pub use density::{mollify_density, DensityField};
pub use domain::{ConvexDomain, DomainShape};
pub use solver::{solve_ma, SolveOptions, HESSIAN_CLAMP};

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{io, Field, GradientField, Grid2, ScalarField, VectorField};
use crate::matalg::{sym_eigen, Mat2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub residual_norm: f64,
    /// `newton`, `monotone` or `analytic`.
    pub method: String,
    pub converged: bool,
    pub threads: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MASolution {
    pub phi: ScalarField,
    pub grad_phi: VectorField,
    pub hess_phi: GradientField,
    /// `det D²φ − g`.
    pub residual: ScalarField,
    pub lambda: f64,
    pub report: SolverReport,
}

impl MASolution {
    /// Samples closed-form `φ`, `Dφ`, `D²φ` on the masked cells of `grid`.
    pub fn from_analytic(
        grid: &Grid2,
        lambda: f64,
        phi: impl Fn([f64; 2]) -> f64,
        grad: impl Fn([f64; 2]) -> [f64; 2],
        hess: impl Fn([f64; 2]) -> Mat2,
        g: impl Fn([f64; 2]) -> f64,
    ) -> Self {
        let hess_phi = Field::from_fn(grid, &hess);
        let residual = Field::from_fn(grid, |p| hess(p).det() - g(p));
        let residual_norm = residual
            .active_indices()
            .map(|k| residual.values[k].abs())
            .fold(0.0, f64::max);
        MASolution {
            phi: Field::from_fn(grid, phi),
            grad_phi: Field::from_fn(grid, grad),
            hess_phi,
            residual,
            lambda,
            report: SolverReport {
                iterations: 0,
                residual_norm,
                method: "analytic".into(),
                converged: true,
                threads: 1,
                tol: 0.0,
            },
        }
    }

    /// `φ = (|x|² − 1)/2` on the unit disk (`g ≡ 1`).
    pub fn radial_fixture(h: f64) -> Self {
        let grid = ConvexDomain::disk(1.0, h).grid;
        Self::from_analytic(
            &grid,
            1.0,
            |p| 0.5 * (p[0] * p[0] + p[1] * p[1] - 1.0),
            |p| p,
            |_| Mat2::IDENTITY,
            |_| 1.0,
        )
    }

    /// `φ = (⟨Yx, x⟩ − 1)/2` on the ellipse `⟨Yx, x⟩ < 1`.
    pub fn quadratic_fixture(y: Mat2, h: f64) -> Result<Self> {
        let s = sym_eigen(y);
        if !y.is_symmetric(1e-14) || s.lam2 <= 0.0 || s.theta.abs() > 1e-14 {
            return Err(Error::InvalidArgument("quadratic fixture needs a positive diagonal Y".into()));
        }
        let grid = ConvexDomain::ellipse(1.0 / y.m11.sqrt(), 1.0 / y.m22.sqrt(), h).grid;
        let d = y.det();
        Ok(Self::from_analytic(
            &grid,
            d.max(1.0 / d),
            |p| 0.5 * (y.m11 * p[0] * p[0] + y.m22 * p[1] * p[1] - 1.0),
            |p| y.apply(p),
            |_| y,
            |_| d,
        ))
    }

    pub fn grid(&self) -> &Grid2 {
        &self.phi.grid
    }

    pub fn sup_norm(&self) -> f64 {
        self.phi
            .active_indices()
            .map(|k| self.phi.values[k].abs())
            .fold(0.0, f64::max)
    }

    /// Smallest Hessian eigenvalue over the domain.
    pub fn min_hessian_eigenvalue(&self) -> f64 {
        self.hess_phi
            .active_indices()
            .map(|k| sym_eigen(self.hess_phi.values[k]).lam2)
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes `phi.csv`, `grad.csv`, `hess.csv` (with sidecars) and
    /// `solver_report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        io::write_field(&dir.join("phi.csv"), &self.phi)?;
        io::write_field(&dir.join("grad.csv"), &self.grad_phi)?;
        io::write_field(&dir.join("hess.csv"), &self.hess_phi)?;
        fs::write(dir.join("solver_report.json"), serde_json::to_string_pretty(&self.report)?)?;
        Ok(())
    }
}

/// `Z_t = {φ ≤ −‖φ‖_∞ / t}` as a cell mask.
pub fn section(sol: &MASolution, t: f64) -> Result<Vec<bool>> {
    if !(t > 1.0) {
        return Err(Error::InvalidArgument(format!("section needs t > 1, got {t}")));
    }
    let level = -sol.sup_norm() / t;
    Ok((0..sol.phi.values.len())
        .map(|k| sol.phi.active[k] && sol.phi.values[k] <= level)
        .collect())
}

/// Cells of `set` with a 4-neighbour outside it (or off the grid).
pub fn boundary_cells(grid: &Grid2, set: &[bool]) -> Vec<usize> {
    (0..grid.len())
        .filter(|&k| {
            set[k]
                && [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|&(di, dj)| !grid.offset(k, di, dj).is_some_and(|n| set[n]))
        })
        .collect()
}

/// `dist(Z₂, ∂Z₄)`: least distance between cells of `Z₂` and boundary cells
/// of `Z₄`.
pub fn section_separation(sol: &MASolution) -> Result<f64> {
    if sol.sup_norm() == 0.0 {
        return Err(Error::EmptySection);
    }
    let grid = sol.grid();
    let z2 = section(sol, 2.0)?;
    let z4 = section(sol, 4.0)?;
    let inner: Vec<[f64; 2]> = (0..grid.len()).filter(|&k| z2[k]).map(|k| grid.center(k)).collect();
    let outer: Vec<[f64; 2]> = boundary_cells(grid, &z4).into_iter().map(|k| grid.center(k)).collect();
    if inner.is_empty() || outer.is_empty() {
        return Err(Error::EmptySection);
    }
    Ok(outer
        .par_iter()
        .map(|q| {
            inner
                .iter()
                .map(|p| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min))
}

/// `∫_region |D²φ|^{1+q} dx` with the operator norm.
pub fn hessian_integrability(sol: &MASolution, q: f64, region: &[bool]) -> Result<f64> {
    if !(q >= 0.0) {
        return Err(Error::InvalidArgument(format!("q = {q} < 0")));
    }
    let h = &sol.hess_phi;
    Ok(h.active_indices()
        .filter(|&k| region[k])
        .map(|k| h.values[k].norm().powf(1.0 + q))
        .sum::<f64>()
        * h.grid.cell_area())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(dom: &ConvexDomain, g: &DensityField) -> MASolution {
        solve_ma(dom, g, &SolveOptions::default()).unwrap()
    }

    fn max_err(sol: &MASolution, exact: impl Fn([f64; 2]) -> f64) -> f64 {
        sol.phi
            .active_indices()
            .map(|k| (sol.phi.values[k] - exact(sol.grid().center(k))).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn unit_density_on_disk() {
        let h = 1.0 / 32.0;
        let dom = ConvexDomain::disk(1.0, h);
        let sol = solve(&dom, &DensityField::constant(&dom.grid, 1.0));
        assert!(max_err(&sol, |p| 0.5 * (p[0] * p[0] + p[1] * p[1] - 1.0)) <= 5.0 * h * h);
        assert!(sol.report.converged && sol.report.residual_norm <= 1e-8);
    }

    #[test]
    fn density_four_on_disk() {
        let h = 1.0 / 32.0;
        let dom = ConvexDomain::disk(1.0, h);
        let sol = solve(&dom, &DensityField::constant(&dom.grid, 4.0));
        assert!(max_err(&sol, |p| p[0] * p[0] + p[1] * p[1] - 1.0) <= 5.0 * h * h);
    }

    #[test]
    fn monotone_scheme_on_unit_density() {
        let h = 1.0 / 32.0;
        let dom = ConvexDomain::disk(1.0, h);
        let opts = SolveOptions {
            force_monotone: true,
            ..SolveOptions::default()
        };
        let sol = solve_ma(&dom, &DensityField::constant(&dom.grid, 1.0), &opts).unwrap();
        assert_eq!(sol.report.method, "monotone");
        assert!(max_err(&sol, |p| 0.5 * (p[0] * p[0] + p[1] * p[1] - 1.0)) <= 5.0 * h * h);
    }

    #[test]
    fn quadratic_on_ellipse() {
        let h = 1.0 / 32.0;
        let y = Mat2::diag(3.0, 1.0 / 3.0);
        let dom = ConvexDomain::ellipse(1.0 / 3f64.sqrt(), 3f64.sqrt(), h);
        assert!(solve_ma(&dom, &DensityField::constant(&dom.grid, 1.0), &SolveOptions::default()).is_err());
        let opts = SolveOptions {
            allow_unnormalized: true,
            ..SolveOptions::default()
        };
        let sol = solve_ma(&dom, &DensityField::constant(&dom.grid, 1.0), &opts).unwrap();
        for k in sol.hess_phi.active_indices() {
            let c = dom.grid.center(k);
            if 3.0 * c[0] * c[0] + c[1] * c[1] / 3.0 < 0.5 {
                assert!((sol.hess_phi.values[k] - y).max_abs() < 1e-6, "{:?}", sol.hess_phi.values[k]);
            }
        }
    }

    #[test]
    fn comparison_principle() {
        let dom = ConvexDomain::disk(1.0, 1.0 / 32.0);
        let s1 = solve(&dom, &DensityField::constant(&dom.grid, 0.5));
        let s2 = solve(&dom, &DensityField::constant(&dom.grid, 1.5));
        for k in s1.phi.active_indices() {
            assert!(s1.phi.values[k] >= s2.phi.values[k] - 1e-8);
        }
    }

    #[test]
    fn rough_density_invariants() {
        let h = 1.0 / 32.0;
        let dom = ConvexDomain::disk(1.0, h);
        let g = mollify_density(&DensityField::checkerboard(&dom.grid, 2.0, 0.25, 1).unwrap(), 0.1).unwrap();
        let sol = solve(&dom, &g);
        let tol = sol.report.tol;
        assert!(sol.min_hessian_eigenvalue() >= -10.0 * tol);
        for k in sol.phi.active_indices() {
            assert!(sol.phi.values[k] <= 0.0);
            let d = sol.hess_phi.values[k].det();
            assert!(d >= 0.5 - tol && d <= 2.0 + tol);
            assert!(sol.residual.values[k].abs() <= tol);
        }
        assert!(section_separation(&sol).unwrap() > 0.0);
    }

    #[test]
    fn solver_is_deterministic() {
        let dom = ConvexDomain::disk(1.0, 1.0 / 16.0);
        let g = mollify_density(&DensityField::checkerboard(&dom.grid, 2.0, 0.5, 3).unwrap(), 0.2).unwrap();
        assert_eq!(solve(&dom, &g).phi, solve(&dom, &g).phi);
    }

    #[test]
    fn radial_sections() {
        let h = 1.0 / 64.0;
        let sol = MASolution::radial_fixture(h);
        let z2 = section(&sol, 2.0).unwrap();
        let z4 = section(&sol, 4.0).unwrap();
        let grid = sol.grid();
        for k in 0..grid.len() {
            let c = grid.center(k);
            let r = c[0].hypot(c[1]);
            // ‖φ‖_∞ is attained at the cell nearest the origin, not at 0.
            if z2[k] {
                assert!(r <= 0.5f64.sqrt() + h);
            }
            if r < 0.5f64.sqrt() - h {
                assert!(z2[k]);
            }
            if z4[k] {
                assert!(r <= 0.75f64.sqrt() + h);
            }
            assert!(!z2[k] || z4[k]);
        }
        let d = section_separation(&sol).unwrap();
        assert!((d - (0.75f64.sqrt() - 0.5f64.sqrt())).abs() <= 3.0 * h, "{d}");
    }

    #[test]
    fn sections_monotone() {
        let sol = MASolution::radial_fixture(1.0 / 32.0);
        let ts = [1.01, 1.5, 2.0, 4.0, 100.0];
        for w in ts.windows(2) {
            let a = section(&sol, w[0]).unwrap();
            let b = section(&sol, w[1]).unwrap();
            assert!(a.iter().zip(&b).all(|(&x, &y)| !x || y));
        }
        let near_one = section(&sol, 1.0001).unwrap();
        assert!(near_one.iter().filter(|&&x| x).count() <= 4);
        let interior = section(&sol, 1e12).unwrap();
        assert_eq!(interior, sol.phi.active);
        assert!(section(&sol, 1.0).is_err());
    }

    #[test]
    fn empty_sections() {
        let mut sol = MASolution::radial_fixture(1.0 / 16.0);
        sol.phi = sol.phi.map(|_| 0.0);
        assert!(matches!(section_separation(&sol), Err(Error::EmptySection)));
    }

    #[test]
    fn hessian_integrals() {
        let sol = MASolution::radial_fixture(1.0 / 64.0);
        let z2 = section(&sol, 2.0).unwrap();
        let area = z2.iter().filter(|&&x| x).count() as f64 * sol.grid().cell_area();
        for q in [0.0, 1.0] {
            assert!((hessian_integrability(&sol, q, &z2).unwrap() - area).abs() < 1e-12);
        }
        let y = Mat2::diag(3.0, 1.0 / 3.0);
        let g = Grid2::square(0.0, 1.0, 1.0 / 16.0);
        let quad = MASolution::from_analytic(&g, 1.0, |_| 0.0, |p| y.apply(p), |_| y, |_| 1.0);
        assert!((hessian_integrability(&quad, 0.0, &g.mask).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn write_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let sol = MASolution::radial_fixture(0.25);
        sol.write(dir.path()).unwrap();
        for f in ["phi.csv", "phi.json", "grad.csv", "hess.csv", "solver_report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let phi: ScalarField = io::read_field(&dir.path().join("phi.csv")).unwrap();
        assert_eq!(phi, sol.phi);
    }
}
