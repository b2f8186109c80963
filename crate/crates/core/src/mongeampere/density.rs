use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Grid2, ScalarField};

/// A density `g` with `λ⁻¹ ≤ g ≤ λ` on every active cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub g: ScalarField,
    pub lambda: f64,
}

impl DensityField {
    pub fn new(g: ScalarField, lambda: f64) -> Result<Self> {
        if !(lambda >= 1.0) {
            return Err(Error::InvalidArgument(format!("λ = {lambda} < 1")));
        }
        let (lo, hi) = (1.0 / lambda, lambda);
        for k in g.active_indices() {
            let v = g.values[k];
            if !(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12)) {
                return Err(Error::InvalidArgument(format!(
                    "density {v} at cell {k} outside [{lo}, {hi}]"
                )));
            }
        }
        Ok(DensityField { g, lambda })
    }

    pub fn constant(grid: &Grid2, c: f64) -> Self {
        let lambda = c.max(1.0 / c);
        DensityField {
            g: Field::constant(grid, c),
            lambda,
        }
    }

    pub fn from_fn(grid: &Grid2, lambda: f64, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(Field::from_fn(grid, f), lambda)
    }

    /// Square blocks of side `block` taking the values `λ` or `λ⁻¹` at random.
    pub fn checkerboard(grid: &Grid2, lambda: f64, block: f64, seed: u64) -> Result<Self> {
        if !(block > 0.0) {
            return Err(Error::InvalidArgument("block size must be positive".into()));
        }
        let g = grid;
        let nb_x = ((g.nx as f64 * g.h) / block).ceil() as usize;
        let nb_y = ((g.ny as f64 * g.h) / block).ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks: Vec<f64> = (0..nb_x * nb_y)
            .map(|_| if rng.gen_bool(0.5) { lambda } else { 1.0 / lambda })
            .collect();
        Self::from_fn(grid, lambda, |p| {
            let bi = (((p[0] - g.origin[0]) / block) as usize).min(nb_x - 1);
            let bj = (((p[1] - g.origin[1]) / block) as usize).min(nb_y - 1);
            blocks[bj * nb_x + bi]
        })
    }
}

fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Convolution with the bump `exp(−1/(1 − |x/scale|²))`, normalised over the
/// active cells it meets, then clamped back into `[λ⁻¹, λ]`.
pub fn mollify_density(g: &DensityField, scale: f64) -> Result<DensityField> {
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!("scale = {scale} ≤ 0")));
    }
    let f = &g.g;
    let grid = &f.grid;
    let reach = (scale / grid.h).ceil() as isize;
    let mut weights = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            let r = (di as f64).hypot(dj as f64) * grid.h / scale;
            let w = bump(r);
            if w > 0.0 {
                weights.push((di, dj, w));
            }
        }
    }
    if weights.is_empty() {
        weights.push((0, 0, 1.0));
    }
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            if !f.active[k] {
                return 0.0;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for &(di, dj, w) in &weights {
                if let Some(n) = grid.offset(k, di, dj) {
                    if f.active[n] {
                        num += w * f.values[n];
                        den += w;
                    }
                }
            }
            (num / den).clamp(1.0 / g.lambda, g.lambda)
        })
        .collect();
    DensityField::new(Field::from_parts(grid.clone(), values, f.active.clone()), g.lambda)
}
