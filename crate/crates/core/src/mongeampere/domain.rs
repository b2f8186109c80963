use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid2;

/// Boundary description used for exact boundary crossings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DomainShape {
    Disk { center: [f64; 2], radius: f64 },
    /// Axis-aligned ellipse with semi-axes `(a, b)`.
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
    /// Convex polygon, counter-clockwise.
    Polygon { vertices: Vec<[f64; 2]> },
    /// Only the mask is known; the first unmasked lattice point is the boundary.
    Mask,
}

impl DomainShape {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            DomainShape::Disk { center, radius } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) < *radius
            }
            DomainShape::Ellipse { center, semi_axes } => {
                let x = (p[0] - center[0]) / semi_axes[0];
                let y = (p[1] - center[1]) / semi_axes[1];
                x * x + y * y < 1.0
            }
            DomainShape::Polygon { vertices } => polygon_edges(vertices)
                .all(|(n, c)| n[0] * p[0] + n[1] * p[1] < c),
            DomainShape::Mask => true,
        }
    }

    /// Distance from the interior point `p` along the unit vector `u` to the
    /// boundary, capped at `max`.
    pub fn crossing(&self, p: [f64; 2], u: [f64; 2], max: f64) -> f64 {
        let s = match self {
            DomainShape::Disk { center, radius } => {
                let q = [p[0] - center[0], p[1] - center[1]];
                let b = q[0] * u[0] + q[1] * u[1];
                let c = q[0] * q[0] + q[1] * q[1] - radius * radius;
                -b + (b * b - c).max(0.0).sqrt()
            }
            DomainShape::Ellipse { center, semi_axes } => {
                let q = [(p[0] - center[0]) / semi_axes[0], (p[1] - center[1]) / semi_axes[1]];
                let v = [u[0] / semi_axes[0], u[1] / semi_axes[1]];
                let a = v[0] * v[0] + v[1] * v[1];
                let b = q[0] * v[0] + q[1] * v[1];
                let c = q[0] * q[0] + q[1] * q[1] - 1.0;
                (-b + (b * b - a * c).max(0.0).sqrt()) / a
            }
            DomainShape::Polygon { vertices } => polygon_edges(vertices)
                .filter_map(|(n, c)| {
                    let nu = n[0] * u[0] + n[1] * u[1];
                    (nu > 0.0).then(|| (c - n[0] * p[0] - n[1] * p[1]) / nu)
                })
                .fold(f64::INFINITY, f64::min),
            DomainShape::Mask => max,
        };
        s.clamp(0.0, max)
    }
}

/// Outward unit normals `n` and offsets `c` with the polygon `{n·x ≤ c}`.
fn polygon_edges(v: &[[f64; 2]]) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
    (0..v.len()).map(move |i| {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        let e = [b[0] - a[0], b[1] - a[1]];
        let l = e[0].hypot(e[1]);
        let n = [e[1] / l, -e[0] / l];
        (n, n[0] * a[0] + n[1] * a[1])
    })
}

/// A convex domain sampled on a lattice: a cell is inside when its centre is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexDomain {
    pub grid: Grid2,
    pub shape: DomainShape,
}

impl ConvexDomain {
    pub fn from_shape(shape: DomainShape, h: f64) -> Result<Self> {
        let r = match &shape {
            DomainShape::Disk { center, radius } => center[0].abs().max(center[1].abs()) + radius,
            DomainShape::Ellipse { center, semi_axes } => {
                center[0].abs().max(center[1].abs()) + semi_axes[0].max(semi_axes[1])
            }
            DomainShape::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::Domain("polygon needs 3 vertices".into()));
                }
                vertices.iter().map(|v| v[0].abs().max(v[1].abs())).fold(0.0, f64::max)
            }
            DomainShape::Mask => {
                return Err(Error::Domain("a mask domain needs a grid".into()));
            }
        };
        let mut grid = Grid2::square(-r, r, h);
        grid.mask = (0..grid.len()).map(|k| shape.contains(grid.center(k))).collect();
        Ok(ConvexDomain { grid, shape })
    }

    /// The disk of the given radius about the origin.
    pub fn disk(radius: f64, h: f64) -> Self {
        Self::from_shape(
            DomainShape::Disk {
                center: [0.0, 0.0],
                radius,
            },
            h,
        )
        .expect("disk")
    }

    pub fn ellipse(a: f64, b: f64, h: f64) -> Self {
        Self::from_shape(
            DomainShape::Ellipse {
                center: [0.0, 0.0],
                semi_axes: [a, b],
            },
            h,
        )
        .expect("ellipse")
    }

    pub fn from_mask(grid: Grid2) -> Self {
        ConvexDomain {
            grid,
            shape: DomainShape::Mask,
        }
    }

    /// `B₁(0) ⊂ O ⊂ B₂(0)` at lattice resolution: every cell centre with
    /// `|x| < 1 − h` is masked and every masked centre has `|x| ≤ 2 + h`.
    pub fn is_normalized(&self) -> bool {
        let g = &self.grid;
        let reaches_unit = g.origin[0] <= -1.0 + g.h
            && g.origin[1] <= -1.0 + g.h
            && g.origin[0] + g.nx as f64 * g.h >= 1.0 - g.h
            && g.origin[1] + g.ny as f64 * g.h >= 1.0 - g.h;
        reaches_unit
            && (0..g.len()).all(|k| {
                let c = g.center(k);
                let r = c[0].hypot(c[1]);
                (r >= 1.0 - g.h || g.mask[k]) && (r <= 2.0 + g.h || !g.mask[k])
            })
    }

    /// Every lattice row, column and diagonal meets the mask in one run, and
    /// segments between random masked centres stay masked up to one cell.
    pub fn check_convexity(&self) -> Result<()> {
        let g = &self.grid;
        for (di, dj) in [(1isize, 0isize), (0, 1), (1, 1), (1, -1)] {
            for k in 0..g.len() {
                // Start of a lattice line: predecessor off the grid.
                if g.offset(k, -di, -dj).is_some() {
                    continue;
                }
                let mut runs = 0;
                let mut prev = false;
                let mut cur = Some(k);
                while let Some(c) = cur {
                    if g.mask[c] && !prev {
                        runs += 1;
                    }
                    prev = g.mask[c];
                    cur = g.offset(c, di, dj);
                }
                if runs > 1 {
                    return Err(Error::Domain(format!(
                        "mask is not convex along direction ({di}, {dj}) from cell {k}"
                    )));
                }
            }
        }
        let cells: Vec<usize> = g.masked_indices().collect();
        if cells.is_empty() {
            return Err(Error::Domain("empty domain".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            let a = g.center(cells[rng.gen_range(0..cells.len())]);
            let b = g.center(cells[rng.gen_range(0..cells.len())]);
            let steps = ((a[0] - b[0]).hypot(a[1] - b[1]) / g.h).ceil() as usize * 2 + 1;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                let near = (-1..=1).any(|dj| {
                    (-1..=1).any(|di| {
                        g.locate(p)
                            .and_then(|k| g.offset(k, di, dj))
                            .is_some_and(|k| g.mask[k])
                    })
                });
                if !near {
                    return Err(Error::Domain(format!("segment {a:?}–{b:?} leaves the mask")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_crossings() {
        let s = DomainShape::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        };
        assert!((s.crossing([0.5, 0.0], [1.0, 0.0], 10.0) - 0.5).abs() < 1e-15);
        let u = [0.6, 0.8];
        let d = s.crossing([0.1, -0.2], u, 10.0);
        assert!(((0.1 + d * u[0]).hypot(-0.2 + d * u[1]) - 1.0).abs() < 1e-14);
        assert_eq!(s.crossing([0.0, 0.0], [1.0, 0.0], 0.25), 0.25);
    }

    #[test]
    fn ellipse_and_polygon_crossings() {
        let e = DomainShape::Ellipse {
            center: [0.0, 0.0],
            semi_axes: [2.0, 0.5],
        };
        assert!((e.crossing([0.0, 0.0], [1.0, 0.0], 10.0) - 2.0).abs() < 1e-14);
        assert!((e.crossing([0.0, 0.0], [0.0, -1.0], 10.0) - 0.5).abs() < 1e-14);
        let sq = DomainShape::Polygon {
            vertices: vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]],
        };
        assert!(sq.contains([0.9, -0.9]));
        assert!(!sq.contains([1.1, 0.0]));
        let r = 0.5f64.sqrt();
        assert!((sq.crossing([0.0, 0.0], [r, r], 10.0) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn normalization() {
        assert!(ConvexDomain::disk(1.0, 1.0 / 32.0).is_normalized());
        assert!(ConvexDomain::disk(1.5, 1.0 / 32.0).is_normalized());
        assert!(!ConvexDomain::disk(0.5, 1.0 / 32.0).is_normalized());
        assert!(!ConvexDomain::disk(2.5, 1.0 / 32.0).is_normalized());
        assert!(!ConvexDomain::ellipse(3f64.sqrt(), 1.0 / 3f64.sqrt(), 1.0 / 32.0).is_normalized());
    }

    #[test]
    fn convexity() {
        ConvexDomain::disk(1.0, 1.0 / 32.0).check_convexity().unwrap();
        let annulus = Grid2::square_masked(-1.0, 1.0, 1.0 / 32.0, |p| {
            let r = p[0].hypot(p[1]);
            r < 1.0 && r > 0.5
        });
        assert!(ConvexDomain::from_mask(annulus).check_convexity().is_err());
    }
}
