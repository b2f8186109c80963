use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Grid2, ScalarField};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Ball {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Ball { center, radius }
    }

    /// `tB`, same centre.
    pub fn dilate(&self, t: f64) -> Ball {
        Ball::new(self.center, t * self.radius)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy <= self.radius * self.radius * (1.0 + 1e-12)
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }
}

/// Balls `B` with `tB` inside the masked region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallFamily {
    pub t: f64,
    pub radii: Vec<f64>,
    pub balls: Vec<Ball>,
}

impl BallFamily {
    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }
}

/// Distance from points to the complement of the union of masked cell squares
/// (everything outside the lattice counts as complement).
pub struct ComplementDistance<'a> {
    grid: &'a Grid2,
    blocking: Vec<[f64; 4]>,
}

impl<'a> ComplementDistance<'a> {
    pub fn new(grid: &'a Grid2) -> Self {
        let h = grid.h;
        let mut blocking = Vec::new();
        for k in 0..grid.len() {
            if grid.mask[k] {
                continue;
            }
            let touches = (-1..=1).any(|dj| {
                (-1..=1).any(|di| grid.offset(k, di, dj).is_some_and(|n| grid.mask[n]))
            });
            if touches {
                let c = grid.center(k);
                blocking.push([c[0] - 0.5 * h, c[0] + 0.5 * h, c[1] - 0.5 * h, c[1] + 0.5 * h]);
            }
        }
        ComplementDistance { grid, blocking }
    }

    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let g = self.grid;
        let x1 = g.origin[0] + g.nx as f64 * g.h;
        let y1 = g.origin[1] + g.ny as f64 * g.h;
        let mut d = (p[0] - g.origin[0])
            .min(x1 - p[0])
            .min(p[1] - g.origin[1])
            .min(y1 - p[1]);
        for b in &self.blocking {
            let dx = (b[0] - p[0]).max(0.0).max(p[0] - b[1]);
            let dy = (b[2] - p[1]).max(0.0).max(p[1] - b[3]);
            d = d.min(dx.hypot(dy));
        }
        d.max(0.0)
    }

    /// Distance for every masked cell centre (0 for unmasked cells).
    pub fn per_cell(&self) -> Vec<f64> {
        (0..self.grid.len())
            .into_par_iter()
            .map(|k| {
                if self.grid.mask[k] {
                    self.distance(self.grid.center(k))
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Calls `f` for every active cell whose centre lies in `ball`.
pub fn for_each_cell_in_ball(grid: &Grid2, active: &[bool], ball: &Ball, mut f: impl FnMut(usize)) {
    let h = grid.h;
    let r = ball.radius;
    let lo_i = ((ball.center[0] - r - grid.origin[0]) / h - 0.5).ceil().max(0.0) as usize;
    let lo_j = ((ball.center[1] - r - grid.origin[1]) / h - 0.5).ceil().max(0.0) as usize;
    let hi_i = ((ball.center[0] + r - grid.origin[0]) / h - 0.5).floor();
    let hi_j = ((ball.center[1] + r - grid.origin[1]) / h - 0.5).floor();
    if hi_i < 0.0 || hi_j < 0.0 {
        return;
    }
    let hi_i = (hi_i as usize).min(grid.nx.saturating_sub(1));
    let hi_j = (hi_j as usize).min(grid.ny.saturating_sub(1));
    for j in lo_j..=hi_j {
        for i in lo_i..=hi_i {
            let k = grid.idx(i, j);
            if active[k] && ball.contains(grid.center_ij(i, j)) {
                f(k);
            }
        }
    }
}

pub fn cells_in_ball(grid: &Grid2, active: &[bool], ball: &Ball) -> Vec<usize> {
    let mut out = Vec::new();
    for_each_cell_in_ball(grid, active, ball, |k| out.push(k));
    out
}

/// `(Σ_{cells ∈ B} f^p h²) / |B ∩ mask|`: the p-th power mean, without the root.
pub fn ball_average(f: &ScalarField, ball: &Ball, p: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for_each_cell_in_ball(&f.grid, &f.active, ball, |k| {
        sum += if p == 0.0 { 1.0 } else { f.values[k].powf(p) };
        n += 1;
    });
    if n == 0 {
        return Err(Error::EmptyBall {
            center: ball.center,
            radius: ball.radius,
        });
    }
    Ok(sum / n as f64)
}

/// All lattice-centred balls of the given radii whose `t`-dilation stays in
/// the mask. Centres are subsampled with stride `max(1, ⌊r/(4h)⌋)` cells.
pub fn ball_family(grid: &Grid2, t: f64, radii: &[f64]) -> Result<BallFamily> {
    if !(t >= 1.0) {
        return Err(Error::InvalidArgument(format!("dilation t = {t} < 1")));
    }
    if radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    let dist = ComplementDistance::new(grid).per_cell();
    let mut balls = Vec::new();
    for &r in radii {
        let stride = ((r / grid.h / 4.0).floor() as usize).max(1);
        for j in (0..grid.ny).step_by(stride) {
            for i in (0..grid.nx).step_by(stride) {
                let k = grid.idx(i, j);
                if grid.mask[k] && t * r <= dist[k] {
                    balls.push(Ball::new(grid.center(k), r));
                }
            }
        }
    }
    Ok(BallFamily {
        t,
        radii: radii.to_vec(),
        balls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Field;

    /// Every lattice square meeting `ball` must be masked.
    fn dilation_inside(grid: &Grid2, ball: &Ball) -> bool {
        let h = grid.h;
        let x1 = grid.origin[0] + grid.nx as f64 * h;
        let y1 = grid.origin[1] + grid.ny as f64 * h;
        if ball.center[0] - ball.radius < grid.origin[0] - 1e-12
            || ball.center[0] + ball.radius > x1 + 1e-12
            || ball.center[1] - ball.radius < grid.origin[1] - 1e-12
            || ball.center[1] + ball.radius > y1 + 1e-12
        {
            return false;
        }
        (0..grid.len()).all(|k| {
            let c = grid.center(k);
            let dx = ((c[0] - ball.center[0]).abs() - 0.5 * h).max(0.0);
            let dy = ((c[1] - ball.center[1]).abs() - 0.5 * h).max(0.0);
            dx.hypot(dy) >= ball.radius - 1e-12 || grid.mask[k]
        })
    }

    #[test]
    fn average_of_constant() {
        let g = Grid2::square(-1.0, 1.0, 0.05);
        let f = Field::constant(&g, 5.0);
        let b = Ball::new([0.1, -0.2], 0.3);
        assert!((ball_average(&f, &b, 1.0).unwrap() - 5.0).abs() < 1e-14);
        assert_eq!(ball_average(&f, &b, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn average_of_radius_on_unit_ball() {
        let g = Grid2::square(-1.0, 1.0, 1.0 / 128.0);
        let f = Field::from_fn(&g, |p| p[0].hypot(p[1]));
        let v = ball_average(&f, &Ball::new([0.0, 0.0], 1.0), 1.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 2.0 / 128.0, "{v}");
    }

    #[test]
    fn empty_intersection_is_an_error() {
        let g = Grid2::square(0.0, 1.0, 0.1);
        let f = Field::constant(&g, 1.0);
        assert!(ball_average(&f, &Ball::new([5.0, 5.0], 0.2), 1.0).is_err());
    }

    #[test]
    fn family_on_unit_square() {
        let g = Grid2::square(0.0, 1.0, 1.0 / 64.0);
        assert!(ball_family(&g, 2.0, &[0.3]).unwrap().is_empty());
        let fam = ball_family(&g, 2.0, &[0.1]).unwrap();
        assert!(!fam.is_empty());
        for b in &fam.balls {
            assert!(dilation_inside(&g, &b.dilate(2.0)));
        }
    }

    #[test]
    fn family_on_disk() {
        let h = 1.0 / 64.0;
        let g = Grid2::square_masked(-1.0, 1.0, h, |p| p[0].hypot(p[1]) < 1.0);
        let fam = ball_family(&g, 4.0, &[0.2]).unwrap();
        assert!(!fam.is_empty());
        for b in &fam.balls {
            assert!(b.center[0].hypot(b.center[1]) <= 0.2 + h);
            assert!(dilation_inside(&g, &b.dilate(4.0)));
        }
    }

    #[test]
    fn family_rejects_bad_dilation() {
        let g = Grid2::square(0.0, 1.0, 0.1);
        assert!(ball_family(&g, 0.5, &[0.1]).is_err());
    }
}
