//! Scenario files: one JSON object naming a pipeline, its inputs and its
//! parameters. Every random draw derives from `seed`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use diffinc::field::{FieldKind, Grid2};
use diffinc::gamma::GammaSpec;
use diffinc::minty::SWEEP_POINTS;
use diffinc::mongeampere::{DomainShape, SolveOptions};
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    EnvelopeCheck,
    CurveAudit,
    RhEstimate,
    MaSolve,
    MintyVerify,
    UcAudit,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::EnvelopeCheck => "envelope-check",
            Pipeline::CurveAudit => "curve-audit",
            Pipeline::RhEstimate => "rh-estimate",
            Pipeline::MaSolve => "ma-solve",
            Pipeline::MintyVerify => "minty-verify",
            Pipeline::UcAudit => "uc-audit",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Must match the subcommand when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<Pipeline>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSource>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub balls: BallSpec,
    #[serde(default)]
    pub params: Params,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A generated map (`{"kind": ...}`) or a field file (`{"file": path}`).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FieldSource {
    File { file: PathBuf },
    Generator(FieldKind),
}

impl<'de> Deserialize<'de> for FieldSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        if let Some(file) = v.get("file") {
            let file = file.as_str().ok_or_else(|| D::Error::custom("`file` must be a string"))?;
            return Ok(FieldSource::File { file: file.into() });
        }
        FieldKind::from_json(&v).map(FieldSource::Generator).map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSource {
    /// `dist(Du, Γ)` for the scenario's field and target set.
    Distance,
    /// `scale·|x|^alpha`.
    Power {
        alpha: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `1` on `{⟨normal, x⟩ > offset}` and `0` elsewhere.
    HalfPlaneZero {
        #[serde(default = "e1")]
        normal: [f64; 2],
        #[serde(default)]
        offset: f64,
    },
    File { file: PathBuf },
}

fn one() -> f64 {
    1.0
}

fn e1() -> [f64; 2] {
    [1.0, 0.0]
}

/// The square `[lo, hi]²` with spacing `h`, masked by `domain` when given.
/// Solver pipelines take `domain` as the Monge–Ampère domain (unit disk by
/// default) and size the grid from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainShape>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: -1.0,
            hi: 1.0,
            h: 1.0 / 64.0,
            domain: None,
        }
    }
}

impl GridSpec {
    pub fn grid(&self) -> Grid2 {
        match &self.domain {
            Some(d) => Grid2::square_masked(self.lo, self.hi, self.h, |p| d.contains(p)),
            None => Grid2::square(self.lo, self.hi, self.h),
        }
    }

    pub fn ma_domain(&self) -> DomainShape {
        self.domain.clone().unwrap_or(DomainShape::Disk {
            center: [0.0, 0.0],
            radius: 1.0,
        })
    }
}

/// The family `𝓑_t`: balls of the listed radii whose `t`-dilates stay inside
/// the mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallSpec {
    pub t: f64,
    pub radii: Vec<f64>,
}

impl Default for BallSpec {
    fn default() -> Self {
        BallSpec {
            t: 2.0,
            radii: vec![0.05, 0.1, 0.2],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub envelope: EnvelopeParams,
    pub rh: RhParams,
    pub ma: MaParams,
    pub minty: MintyParams,
    pub uc: UcParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeParams {
    /// Random matrices drawn when no field is given.
    pub samples: usize,
    /// Entries are uniform on `[−range, range]`.
    pub range: f64,
    /// Second target set whose verdicts are compared sample by sample.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<GammaSpec>,
    pub max_disagreement: f64,
    /// Disagreements must lie within this distance of the reference envelope
    /// boundary.
    pub boundary_band: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        EnvelopeParams {
            samples: 1000,
            range: 2.0,
            reference: None,
            max_disagreement: 0.005,
            boundary_band: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhParams {
    /// Constant used when estimating `ε`.
    pub c_budget: f64,
    /// A claimed `RH(ε, C)`; checked instead of estimated when both are set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Random `(A, B)` pairs for the measure comparison.
    pub comparison_pairs: usize,
    /// Dilation of the doubling family.
    pub doubling_t: f64,
}

impl Default for RhParams {
    fn default() -> Self {
        RhParams {
            c_budget: 2.0,
            epsilon: None,
            c: None,
            comparison_pairs: 1000,
            doubling_t: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Constant {
        value: f64,
    },
    /// Blocks of side `block` set to `λ` or `1/λ` from the scenario seed,
    /// optionally mollified at `mollify`.
    Checkerboard {
        lambda: f64,
        block: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mollify: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaParams {
    pub density: DensitySpec,
    pub solver: SolveOptions,
    /// Sup error bound `factor·h²` against the closed form, where one exists.
    pub sup_error_factor: f64,
}

impl Default for MaParams {
    fn default() -> Self {
        MaParams {
            density: DensitySpec::Constant { value: 1.0 },
            solver: SolveOptions::default(),
            sup_error_factor: 5.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MintySource {
    /// Solve with `params.ma` on the grid domain.
    #[default]
    Solve,
    /// `φ = (|x|² − 1)/2` on the unit disk.
    Radial,
    /// `φ = (⟨Yx, x⟩ − 1)/2` with `Y = diag(y)`, `y₁ ≥ y₂`.
    Quadratic { y: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MintyParams {
    pub source: MintySource,
    #[serde(rename = "C_budget")]
    pub c_budget: f64,
    /// Ellipticity of the bounds; the solution's own `λ` when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub expansion_pairs: usize,
    pub probe_angles: usize,
    pub sweep_points: usize,
}

impl Default for MintyParams {
    fn default() -> Self {
        MintyParams {
            source: MintySource::Solve,
            c_budget: 2.0,
            lambda: None,
            expansion_pairs: 10_000,
            probe_angles: 16,
            sweep_points: SWEEP_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UcParams {
    pub c_budget: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Distances at or below this count as zero.
    pub zero_tol: f64,
    /// Largest spread of `Du` accepted as affine.
    pub affine_tol: f64,
}

impl Default for UcParams {
    fn default() -> Self {
        UcParams {
            c_budget: 2.0,
            epsilon: None,
            c: None,
            zero_tol: 1e-10,
            affine_tol: 1e-8,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Reads a scenario; relative input paths are resolved against the
    /// directory of `path`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut s = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(FieldSource::File { file }) = &mut s.field {
            rebase(file);
        }
        if let Some(WeightSource::File { file }) = &mut s.weight {
            rebase(file);
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let g = &self.grid;
        if !(g.h > 0.0) || !(g.hi > g.lo) {
            return bad(format!("grid needs h > 0 and hi > lo, got h = {}, [{}, {}]", g.h, g.lo, g.hi));
        }
        if (g.hi - g.lo) / g.h > 1e5 {
            return bad(format!("grid with h = {} is too fine", g.h));
        }
        if !(self.balls.t >= 1.0) || self.balls.radii.is_empty() || self.balls.radii.iter().any(|&r| !(r > 0.0)) {
            return bad("balls need t ≥ 1 and positive radii".into());
        }
        let rh = &self.params.rh;
        let uc = &self.params.uc;
        if !(rh.c_budget >= 1.0) || !(uc.c_budget >= 1.0) || !(self.params.minty.c_budget >= 1.0) {
            return bad("C_budget must be at least 1".into());
        }
        for (e, c) in [(rh.epsilon, rh.c), (uc.epsilon, uc.c)] {
            if e.is_some() != c.is_some() {
                return bad("a claimed RH(ε, C) needs both `epsilon` and `C`".into());
            }
            if let (Some(e), Some(c)) = (e, c) {
                if !(e > 0.0) || !(c >= 1.0) {
                    return bad(format!("claimed RH(ε, C) needs ε > 0 and C ≥ 1, got ({e}, {c})"));
                }
            }
        }
        match &self.params.ma.density {
            DensitySpec::Constant { value } if !(*value > 0.0) => {
                return bad(format!("density must be positive, got {value}"));
            }
            DensitySpec::Checkerboard { lambda, block, mollify } => {
                if !(*lambda >= 1.0) || !(*block > 0.0) || mollify.is_some_and(|m| !(m > 0.0)) {
                    return bad("checkerboard needs λ ≥ 1, block > 0 and mollify > 0".into());
                }
            }
            _ => {}
        }
        if let MintySource::Quadratic { y } = self.params.minty.source {
            if !(y[1] > 0.0) || y[0] < y[1] {
                return bad(format!("quadratic fixture needs y₁ ≥ y₂ > 0, got {y:?}"));
            }
        }
        Ok(())
    }

    /// The pipeline to run: the subcommand, which must agree with the
    /// scenario's own `pipeline` when that is set.
    pub fn resolve_pipeline(&self, requested: Pipeline) -> Result<Pipeline, CliError> {
        match self.pipeline {
            Some(p) if p != requested => Err(CliError::Config(format!(
                "scenario `{}` is for {p}, not {requested}",
                self.name
            ))),
            _ => Ok(requested),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_takes_defaults() {
        let s = Scenario::from_json(r#"{"name": "a", "seed": 1}"#).unwrap();
        assert_eq!(s.grid, GridSpec::default());
        assert_eq!(s.balls.radii, vec![0.05, 0.1, 0.2]);
        assert_eq!(s.output_dir, PathBuf::from("out"));
        assert_eq!(s.params.minty.sweep_points, SWEEP_POINTS);
    }

    #[test]
    fn full_scenario_round_trips() {
        let text = r#"{
            "name": "uc", "seed": 18446744073709551615, "pipeline": "uc-audit",
            "gamma": {"variant": "Singleton", "K": 1.0, "matrix": [[0, 0], [0, 0]]},
            "field": {"kind": "power_map", "k": 2},
            "grid": {"lo": -1, "hi": 1, "h": 0.03125, "domain": {"shape": "disk", "center": [0, 0], "radius": 1}},
            "params": {"uc": {"epsilon": 1.0, "C": 10.0}, "ma": {"solver": {"tol": 1e-9}}}
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert_eq!(s.seed, u64::MAX);
        assert_eq!(s.pipeline, Some(Pipeline::UcAudit));
        assert_eq!(s.field, Some(FieldSource::Generator(FieldKind::PowerMap { k: 2 })));
        assert_eq!(s.params.ma.solver.tol, 1e-9);
        assert_eq!(s.params.ma.solver.max_iter, SolveOptions::default().max_iter);
        let back = Scenario::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn malformed_configs_are_rejected() {
        let cases = [
            r#"{"name": "a"}"#,
            r#"{"name": "a", "seed": -1}"#,
            r#"{"name": "a", "seed": 1, "colour": 3}"#,
            r#"{"name": "a", "seed": 1, "field": {"kind": "spiral"}}"#,
            r#"{"name": "a", "seed": 1, "gamma": {"variant": "SO2", "K": 0.5}}"#,
            r#"{"name": "a", "seed": 1, "grid": {"h": 0}}"#,
            r#"{"name": "a", "seed": 1, "params": {"uc": {"epsilon": 1.0}}}"#,
            r#"{"name": "a", "seed": 1, "params": {"minty": {"source": {"kind": "quadratic", "y": [1, 2]}}}}"#,
            r#"{"name": "a", "seed": 1, "weight": {"kind": "power"}}"#,
            "not json",
        ];
        for c in cases {
            assert!(matches!(Scenario::from_json(c), Err(CliError::Config(_))), "{c}");
        }
    }

    #[test]
    fn unknown_field_kind_is_named() {
        let e = Scenario::from_json(r#"{"name": "a", "seed": 1, "field": {"kind": "spiral"}}"#).unwrap_err();
        assert!(e.to_string().contains("spiral"), "{e}");
    }

    #[test]
    fn pipeline_must_match() {
        let s = Scenario::from_json(r#"{"name": "a", "seed": 1, "pipeline": "ma-solve"}"#).unwrap();
        assert_eq!(s.resolve_pipeline(Pipeline::MaSolve).unwrap(), Pipeline::MaSolve);
        assert!(s.resolve_pipeline(Pipeline::UcAudit).is_err());
    }

    #[test]
    fn relative_files_resolve_against_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        fs::write(&path, r#"{"name": "a", "seed": 1, "field": {"file": "u.csv"}}"#).unwrap();
        let s = Scenario::load(&path).unwrap();
        assert_eq!(s.field, Some(FieldSource::File { file: dir.path().join("u.csv") }));
    }
}
