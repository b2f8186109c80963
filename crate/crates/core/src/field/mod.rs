//! Masked rectangular lattices and the fields sampled on them.
//!
//! Cells are indexed row-major, `idx = j * nx + i`, with cell `(i, j)`
//! centred at `origin + ((i + ½) h, (j + ½) h)`. Integrals are cell-centre
//! quadratures: a cell belongs to a set when its centre does.

mod balls;
mod generate;
pub mod io;

pub use balls::{ball_average, ball_family, cells_in_ball, for_each_cell_in_ball, Ball, BallFamily, ComplementDistance};
pub use generate::{generate_test_field, FieldKind, RadialProfile};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::matalg::Mat2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    /// Lower-left corner of cell `(0, 0)`.
    pub origin: [f64; 2],
    pub mask: Vec<bool>,
}

impl Grid2 {
    /// Fully masked `nx × ny` lattice.
    pub fn new(nx: usize, ny: usize, h: f64, origin: [f64; 2]) -> Self {
        assert!(h > 0.0, "grid spacing must be positive");
        Grid2 {
            nx,
            ny,
            h,
            origin,
            mask: vec![true; nx * ny],
        }
    }

    /// Fully masked lattice covering `[lo, hi]²` with spacing close to `h`.
    pub fn square(lo: f64, hi: f64, h: f64) -> Self {
        let n = ((hi - lo) / h).round().max(1.0) as usize;
        Grid2::new(n, n, (hi - lo) / n as f64, [lo, lo])
    }

    /// Lattice over `[lo, hi]²` masked by a predicate on cell centres.
    pub fn square_masked(lo: f64, hi: f64, h: f64, inside: impl Fn([f64; 2]) -> bool) -> Self {
        let mut g = Grid2::square(lo, hi, h);
        g.mask = (0..g.len()).map(|k| inside(g.center(k))).collect();
        g
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), self.nx * self.ny);
        self.mask = mask;
        self
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    /// Index of `(i + di, j + dj)` when it lies on the lattice.
    #[inline]
    pub fn offset(&self, idx: usize, di: isize, dj: isize) -> Option<usize> {
        let (i, j) = self.ij(idx);
        let ii = i as isize + di;
        let jj = j as isize + dj;
        if ii < 0 || jj < 0 || ii >= self.nx as isize || jj >= self.ny as isize {
            None
        } else {
            Some(self.idx(ii as usize, jj as usize))
        }
    }

    #[inline]
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.ij(idx);
        self.center_ij(i, j)
    }

    #[inline]
    pub fn center_ij(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h,
            self.origin[1] + (j as f64 + 0.5) * self.h,
        ]
    }

    /// Cell containing `p`, if any.
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        let fi = ((p[0] - self.origin[0]) / self.h).floor();
        let fj = ((p[1] - self.origin[1]) / self.h).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some(self.idx(fi as usize, fj as usize))
    }

    /// Cell whose centre is `p` up to rounding.
    pub fn nearest_cell(&self, p: [f64; 2]) -> Option<usize> {
        let fi = ((p[0] - self.origin[0]) / self.h - 0.5).round();
        let fj = ((p[1] - self.origin[1]) / self.h - 0.5).round();
        if fi < 0.0 || fj < 0.0 || fi >= self.nx as f64 || fj >= self.ny as f64 {
            return None;
        }
        Some(self.idx(fi as usize, fj as usize))
    }

    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.mask[k])
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Whether the masked cells form one 4-connected component.
    pub fn is_connected(&self) -> bool {
        let Some(start) = self.masked_indices().next() else {
            return false;
        };
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for (di, dj) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(n) = self.offset(k, di, dj) {
                    if self.mask[n] && !seen[n] {
                        seen[n] = true;
                        count += 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        count == self.masked_count()
    }
}

/// Values on the active cells of a grid. Inactive entries hold `T::default()`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field<T> {
    pub grid: Grid2,
    pub values: Vec<T>,
    pub active: Vec<bool>,
}

pub type ScalarField = Field<f64>;
pub type VectorField = Field<[f64; 2]>;
pub type GradientField = Field<Mat2>;

impl<T: Copy + Default> Field<T> {
    /// Samples `f` at the centres of the grid's masked cells.
    pub fn from_fn(grid: &Grid2, f: impl Fn([f64; 2]) -> T) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                if grid.mask[k] {
                    f(grid.center(k))
                } else {
                    T::default()
                }
            })
            .collect();
        Field {
            grid: grid.clone(),
            values,
            active: grid.mask.clone(),
        }
    }

    pub fn constant(grid: &Grid2, v: T) -> Self {
        Field::from_fn(grid, |_| v)
    }

    pub fn from_parts(grid: Grid2, values: Vec<T>, active: Vec<bool>) -> Self {
        assert_eq!(values.len(), grid.len());
        assert_eq!(active.len(), grid.len());
        Field {
            grid,
            values,
            active,
        }
    }

    #[inline]
    pub fn get(&self, idx: usize) -> Option<T> {
        if self.active[idx] {
            Some(self.values[idx])
        } else {
            None
        }
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).filter(move |&k| self.active[k])
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Field<U> {
        let values = self
            .values
            .iter()
            .zip(&self.active)
            .map(|(&v, &a)| if a { f(v) } else { U::default() })
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
            active: self.active.clone(),
        }
    }

    /// Keeps only active cells also selected by `keep`.
    pub fn restrict(&self, keep: &[bool]) -> Self {
        let mut out = self.clone();
        for (a, &k) in out.active.iter_mut().zip(keep) {
            *a &= k;
        }
        for k in 0..out.values.len() {
            if !out.active[k] {
                out.values[k] = T::default();
            }
        }
        out
    }
}

impl ScalarField {
    pub fn max_active(&self) -> f64 {
        self.active_indices()
            .map(|k| self.values[k])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_active(&self) -> f64 {
        self.active_indices()
            .map(|k| self.values[k])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_active(&self) -> f64 {
        let n = self.active_count();
        if n == 0 {
            return 0.0;
        }
        self.active_indices().map(|k| self.values[k]).sum::<f64>() / n as f64
    }

    /// `∫ f dx` over active cells.
    pub fn integral(&self) -> f64 {
        self.active_indices().map(|k| self.values[k]).sum::<f64>() * self.grid.cell_area()
    }
}

/// Central differences where both neighbours are active, second-order
/// one-sided differences at the edge of the active set, first-order when only
/// one neighbour exists. Cells with no usable neighbour along some axis are
/// dropped from the result.
pub fn finite_diff_gradient(u: &VectorField) -> GradientField {
    let g = &u.grid;
    let h = g.h;
    let mut values = vec![Mat2::ZERO; g.len()];
    let mut active = vec![false; g.len()];
    let val = |k: Option<usize>| k.and_then(|k| u.get(k));
    for k in u.active_indices() {
        let mut cols = [[0.0; 2]; 2];
        let mut ok = true;
        for (axis, (di, dj)) in [(1isize, 0isize), (0, 1)].into_iter().enumerate() {
            let c = u.values[k];
            let f1 = val(g.offset(k, di, dj));
            let b1 = val(g.offset(k, -di, -dj));
            let d = match (b1, f1) {
                (Some(b), Some(f)) => [(f[0] - b[0]) / (2.0 * h), (f[1] - b[1]) / (2.0 * h)],
                (None, Some(f)) => match val(g.offset(k, 2 * di, 2 * dj)) {
                    Some(f2) => [
                        (-3.0 * c[0] + 4.0 * f[0] - f2[0]) / (2.0 * h),
                        (-3.0 * c[1] + 4.0 * f[1] - f2[1]) / (2.0 * h),
                    ],
                    None => [(f[0] - c[0]) / h, (f[1] - c[1]) / h],
                },
                (Some(b), None) => match val(g.offset(k, -2 * di, -2 * dj)) {
                    Some(b2) => [
                        (3.0 * c[0] - 4.0 * b[0] + b2[0]) / (2.0 * h),
                        (3.0 * c[1] - 4.0 * b[1] + b2[1]) / (2.0 * h),
                    ],
                    None => [(c[0] - b[0]) / h, (c[1] - b[1]) / h],
                },
                (None, None) => {
                    ok = false;
                    break;
                }
            };
            cols[axis] = d;
        }
        if ok {
            values[k] = Mat2::new(cols[0][0], cols[1][0], cols[0][1], cols[1][1]);
            active[k] = true;
        }
    }
    Field {
        grid: g.clone(),
        values,
        active,
    }
}

/// Bilinear interpolation of an active field at `p`; `None` unless all four
/// surrounding cell centres are active.
pub fn interpolate<T>(f: &Field<T>, p: [f64; 2]) -> Option<T>
where
    T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let g = &f.grid;
    let sx = (p[0] - g.origin[0]) / g.h - 0.5;
    let sy = (p[1] - g.origin[1]) / g.h - 0.5;
    let (i0, j0) = (sx.floor(), sy.floor());
    if i0 < 0.0 || j0 < 0.0 || i0 + 1.0 >= g.nx as f64 || j0 + 1.0 >= g.ny as f64 {
        return None;
    }
    let (i0, j0) = (i0 as usize, j0 as usize);
    let (tx, ty) = (sx - i0 as f64, sy - j0 as f64);
    let v00 = f.get(g.idx(i0, j0))?;
    let v10 = f.get(g.idx(i0 + 1, j0))?;
    let v01 = f.get(g.idx(i0, j0 + 1))?;
    let v11 = f.get(g.idx(i0 + 1, j0 + 1))?;
    Some(v00 * ((1.0 - tx) * (1.0 - ty)) + v10 * (tx * (1.0 - ty)) + v01 * ((1.0 - tx) * ty) + v11 * (tx * ty))
}
