//! Collision probe for injectivity of `u − S`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TransformedMap;
use crate::field::Grid2;
use crate::matalg::Mat2;

/// Cells within this Chebyshev lattice distance of each other are merged
/// before counting the preimages in a bucket.
pub const PROBE_EXCLUSION: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub injective: bool,
    /// Largest number of separated preimage clusters sharing a bucket.
    pub multiplicity: usize,
    /// Two cells from different clusters of the worst bucket.
    pub witness: Option<(usize, usize)>,
}

/// Evaluates `u(z) − Sz` on every `Ω` cell, buckets the values on a grid of
/// spacing `h_Ω/2`, and counts preimage clusters per bucket.
pub fn homeomorphism_probe(tm: &TransformedMap, s: Mat2) -> ProbeResult {
    homeomorphism_probe_with(tm, s, PROBE_EXCLUSION)
}

pub fn homeomorphism_probe_with(tm: &TransformedMap, s: Mat2, exclusion: usize) -> ProbeResult {
    let u = &tm.u;
    let grid = &u.grid;
    let bucket = 0.5 * grid.h;
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for k in u.active_indices() {
        let z = grid.center(k);
        let sz = s.apply(z);
        let v = [u.values[k][0] - sz[0], u.values[k][1] - sz[1]];
        let key = ((v[0] / bucket).floor() as i64, (v[1] / bucket).floor() as i64);
        buckets.entry(key).or_default().push(k);
    }
    let mut keys: Vec<_> = buckets.keys().copied().collect();
    keys.sort_unstable();
    let mut best = (1, None);
    for key in keys {
        let cells = &buckets[&key];
        if cells.len() < 2 {
            continue;
        }
        let (n, wit) = clusters(grid, cells, exclusion);
        if n > best.0 {
            best = (n, wit);
        }
    }
    ProbeResult {
        injective: best.0 == 1,
        multiplicity: best.0,
        witness: best.1,
    }
}

/// Connected components of `cells` under the Chebyshev-distance relation.
fn clusters(grid: &Grid2, cells: &[usize], exclusion: usize) -> (usize, Option<(usize, usize)>) {
    let n = cells.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut i = i;
        while p[i] != r {
            let next = p[i];
            p[i] = r;
            i = next;
        }
        r
    }
    let ij: Vec<(usize, usize)> = cells.iter().map(|&k| grid.ij(k)).collect();
    for a in 0..n {
        for b in a + 1..n {
            let d = ij[a].0.abs_diff(ij[b].0).max(ij[a].1.abs_diff(ij[b].1));
            if d <= exclusion {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let first = roots[0];
    let witness = roots.iter().position(|&r| r != first).map(|i| (cells[0], cells[i]));
    roots.sort_unstable();
    roots.dedup();
    (roots.len(), witness)
}

#[cfg(test)]
mod tests {
    use super::super::{minty_transform, SingularSet, A0};
    use super::*;
    use crate::field::Field;
    use crate::mongeampere::MASolution;

    #[test]
    fn radial_fixture_is_injective() {
        let (_, tm) = minty_transform(&MASolution::radial_fixture(1.0 / 32.0)).unwrap();
        let p = homeomorphism_probe(&tm, A0);
        assert!(p.injective && p.multiplicity == 1 && p.witness.is_none());
    }

    #[test]
    fn quadratic_fixture_sweep() {
        let sol = MASolution::quadratic_fixture(Mat2::diag(3.0, 1.0 / 3.0), 1.0 / 32.0).unwrap();
        let (_, tm) = minty_transform(&sol).unwrap();
        // du − A₀ = diag(−½, ½)
        assert!(((Mat2::diag(0.5, -0.5) - A0).det() + 0.25).abs() < 1e-15);
        for i in 0..16 {
            let s = SingularSet::member(i as f64 * std::f64::consts::PI / 16.0);
            assert!(homeomorphism_probe(&tm, s).injective, "angle {i}");
        }
    }

    #[test]
    fn fold_is_detected() {
        let (_, mut tm) = minty_transform(&MASolution::radial_fixture(1.0 / 32.0)).unwrap();
        // u − A₀ = (|z|², z₂) covers each image point twice.
        let g = tm.u.grid.clone();
        tm.u = Field::from_fn(&g, |z| {
            let az = A0.apply(z);
            [az[0] + z[0] * z[0] + z[1] * z[1], az[1] + z[1]]
        });
        let p = homeomorphism_probe(&tm, A0);
        assert!(!p.injective && p.multiplicity >= 2, "{p:?}");
        let (a, b) = p.witness.unwrap();
        let (za, zb) = (g.center(a), g.center(b));
        assert!((za[0] + zb[0]).abs() < 4.0 * g.h && (za[0] - zb[0]).abs() > 2.0 * g.h);
    }
}
