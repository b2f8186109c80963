//! Field files: a CSV with header `x,y,<components...>` holding one row per
//! active cell (row-major order), plus a JSON sidecar
//! `{nx, ny, h, origin, mask_rle}`.
//!
//! `mask_rle` lists run lengths of the active mask in row-major order,
//! alternating inactive/active and starting with an inactive run (possibly 0).
//! Numbers are written with 17 significant digits, so values survive a
//! round trip bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Field, Grid2};
use crate::error::{Error, Result};
use crate::matalg::Mat2;

/// 17 significant digits, exponent form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub trait FieldValue: Copy + Default {
    const COMPONENTS: &'static [&'static str];
    fn write_components(&self, out: &mut Vec<f64>);
    fn from_components(c: &[f64]) -> Self;
}

impl FieldValue for f64 {
    const COMPONENTS: &'static [&'static str] = &["value"];
    fn write_components(&self, out: &mut Vec<f64>) {
        out.push(*self);
    }
    fn from_components(c: &[f64]) -> Self {
        c[0]
    }
}

impl FieldValue for [f64; 2] {
    const COMPONENTS: &'static [&'static str] = &["u1", "u2"];
    fn write_components(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self);
    }
    fn from_components(c: &[f64]) -> Self {
        [c[0], c[1]]
    }
}

impl FieldValue for Mat2 {
    const COMPONENTS: &'static [&'static str] = &["m11", "m12", "m21", "m22"];
    fn write_components(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&[self.m11, self.m12, self.m21, self.m22]);
    }
    fn from_components(c: &[f64]) -> Self {
        Mat2::new(c[0], c[1], c[2], c[3])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub mask_rle: Vec<usize>,
}

pub fn encode_rle(mask: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0usize;
    for &m in mask {
        if m == current {
            len += 1;
        } else {
            runs.push(len);
            current = m;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_rle(runs: &[usize], total: usize) -> Result<Vec<bool>> {
    let mut mask = Vec::with_capacity(total);
    let mut current = false;
    for &r in runs {
        mask.extend(std::iter::repeat(current).take(r));
        current = !current;
    }
    if mask.len() != total {
        return Err(Error::Format(format!(
            "mask_rle covers {} cells, grid has {total}",
            mask.len()
        )));
    }
    Ok(mask)
}

/// `foo.csv` → `foo.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn field_to_csv<T: FieldValue>(field: &Field<T>) -> String {
    let mut s = String::from("x,y");
    for c in T::COMPONENTS {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    let mut comps = Vec::with_capacity(T::COMPONENTS.len());
    for k in field.active_indices() {
        let p = field.grid.center(k);
        comps.clear();
        field.values[k].write_components(&mut comps);
        let _ = write!(s, "{},{}", fmt_f64(p[0]), fmt_f64(p[1]));
        for v in &comps {
            s.push(',');
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

pub fn sidecar_of<T: Copy + Default>(field: &Field<T>) -> Sidecar {
    Sidecar {
        nx: field.grid.nx,
        ny: field.grid.ny,
        h: field.grid.h,
        origin: field.grid.origin,
        mask_rle: encode_rle(&field.active),
    }
}

pub fn write_field<T: FieldValue>(csv_path: &Path, field: &Field<T>) -> Result<()> {
    fs::write(csv_path, field_to_csv(field))?;
    fs::write(
        sidecar_path(csv_path),
        serde_json::to_string_pretty(&sidecar_of(field))?,
    )?;
    Ok(())
}

pub fn field_from_csv<T: FieldValue>(csv: &str, sidecar: &Sidecar) -> Result<Field<T>> {
    let total = sidecar.nx * sidecar.ny;
    let mask = decode_rle(&sidecar.mask_rle, total)?;
    let grid = Grid2 {
        nx: sidecar.nx,
        ny: sidecar.ny,
        h: sidecar.h,
        origin: sidecar.origin,
        mask: mask.clone(),
    };
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
    let expected: Vec<&str> = ["x", "y"].into_iter().chain(T::COMPONENTS.iter().copied()).collect();
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != expected {
        return Err(Error::Format(format!(
            "header {cols:?}, expected {expected:?}"
        )));
    }
    let mut values = vec![T::default(); total];
    let mut seen = vec![false; total];
    let mut row = Vec::with_capacity(cols.len());
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        row.clear();
        for tok in line.split(',') {
            row.push(tok.trim().parse::<f64>().map_err(|e| {
                Error::Format(format!("line {}: `{tok}`: {e}", lineno + 2))
            })?);
        }
        if row.len() != cols.len() {
            return Err(Error::Format(format!(
                "line {}: {} columns, expected {}",
                lineno + 2,
                row.len(),
                cols.len()
            )));
        }
        let k = grid
            .nearest_cell([row[0], row[1]])
            .ok_or_else(|| Error::Format(format!("line {}: point off grid", lineno + 2)))?;
        if !mask[k] {
            return Err(Error::Format(format!(
                "line {}: cell {k} not in mask",
                lineno + 2
            )));
        }
        values[k] = T::from_components(&row[2..]);
        seen[k] = true;
    }
    if seen != mask {
        return Err(Error::Format("CSV rows do not cover the mask".into()));
    }
    Ok(Field::from_parts(grid, values, mask))
}

pub fn read_field<T: FieldValue>(csv_path: &Path) -> Result<Field<T>> {
    let csv = fs::read_to_string(csv_path)?;
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(csv_path))?)?;
    field_from_csv(&csv, &sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rle_roundtrip_edges() {
        for mask in [vec![], vec![true], vec![false], vec![true, true, false, true]] {
            let rle = encode_rle(&mask);
            assert_eq!(decode_rle(&rle, mask.len()).unwrap(), mask);
        }
        assert_eq!(encode_rle(&[true, true, false]), vec![0, 2, 1]);
        assert!(decode_rle(&[1, 2], 4).is_err());
    }

    #[test]
    fn file_roundtrip_matrix_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("du.csv");
        let g = Grid2::square_masked(-1.0, 1.0, 0.125, |p| p[0] + p[1] < 0.5);
        let f = Field::from_fn(&g, |p| Mat2::new(p[0], 1.0 / 3.0, p[1].exp(), -p[0] * p[1]));
        write_field(&path, &f).unwrap();
        let back: Field<Mat2> = read_field(&path).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn header_mismatch_rejected() {
        let g = Grid2::square(0.0, 1.0, 0.5);
        let f = Field::constant(&g, 1.0f64);
        let csv = field_to_csv(&f);
        let side = sidecar_of(&f);
        assert!(field_from_csv::<[f64; 2]>(&csv, &side).is_err());
    }

    proptest! {
        #[test]
        fn scalar_values_roundtrip_bit_exact(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 12)) {
            let g = Grid2::new(4, 3, 0.25, [-1.0, 2.0]);
            let f = Field::from_parts(g.clone(), vals.clone(), vec![true; 12]);
            let back: Field<f64> = field_from_csv(&field_to_csv(&f), &sidecar_of(&f)).unwrap();
            for (a, b) in back.values.iter().zip(&vals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
