//! Scenario execution: one function per pipeline, each returning a pass flag
//! and a JSON result with witnesses for every failed property.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use diffinc::field::io::{read_field, sidecar_path, write_field};
use diffinc::field::{ball_family, finite_diff_gradient, generate_test_field, Field, GradientField, VectorField};
use diffinc::gamma::{check_elliptic_curve, dist_matrix, envelope_member, GammaSpec, GammaVariant};
use diffinc::matalg::{from_conformal, to_conformal, ConformalCoords, Mat2};
use diffinc::minty::{
    comparability_check, det_bound_report, epsilon_pipeline_with, expansion_report, homeomorphism_probe,
    inclusion_report, minty_transform, ComparabilityBounds, PipelineOptions, SingularSet, ALGEBRAIC_TOL,
};
use diffinc::mongeampere::{
    mollify_density, section_separation, solve_ma, ConvexDomain, DensityField, DomainShape, MASolution,
};
use diffinc::weights::{
    ap_ladder, dichotomy_audit, doubling_check, estimate_rh_exponent, measure_comparison_check,
    reverse_holder_check, BallRecord, Verdict, WeightField,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::scenario::{DensitySpec, FieldSource, MintySource, Pipeline, Scenario, WeightSource};
use crate::{json as fixed, CliError};

pub const REPORT_FILE: &str = "report.json";
/// Witnesses listed per failed property.
const MAX_WITNESSES: usize = 10;

/// Command-line overrides applied on top of the scenario file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario: Scenario,
    /// SHA-256 of the scenario (without its output directory) and of every
    /// input file it reads.
    pub input_hash: String,
    pub threads: usize,
    pub pipeline: Pipeline,
    pub pass: bool,
    pub exit_code: i32,
    pub result: Value,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    pub report_path: PathBuf,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.report.exit_code
    }
}

struct Checked {
    pass: bool,
    result: Value,
}

/// Runs `pipeline` on `scenario` and writes `report.json` plus the CSV
/// fields of the pipeline into the output directory.
pub fn run_scenario(mut scenario: Scenario, pipeline: Pipeline, opts: &RunOptions) -> Result<Outcome, CliError> {
    let pipeline = scenario.resolve_pipeline(pipeline)?;
    scenario.pipeline = Some(pipeline);
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    if let Some(out) = &opts.out {
        scenario.output_dir = out.clone();
    }
    if opts.threads == Some(0) {
        return Err(CliError::Config("--threads must be positive".into()));
    }
    let input_hash = input_hash(&scenario)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Exec(diffinc::Error::InvalidArgument(e.to_string())))?;
    let out = scenario.output_dir.clone();
    fs::create_dir_all(&out)?;
    let (checked, threads) = pool.install(|| {
        let c = match pipeline {
            Pipeline::EnvelopeCheck => envelope_check(&scenario, &out),
            Pipeline::CurveAudit => curve_audit(&scenario),
            Pipeline::RhEstimate => rh_estimate(&scenario, &out),
            Pipeline::MaSolve => ma_solve(&scenario, &out),
            Pipeline::MintyVerify => minty_verify(&scenario, &out),
            Pipeline::UcAudit => uc_audit(&scenario, &out),
        };
        (c, rayon::current_num_threads())
    });
    let checked = checked?;
    let report = Report {
        scenario,
        input_hash,
        threads,
        pipeline,
        pass: checked.pass,
        exit_code: if checked.pass { 0 } else { 2 },
        result: checked.result,
    };
    let report_path = out.join(REPORT_FILE);
    fs::write(&report_path, fixed::to_string(&report)?)?;
    Ok(Outcome { report, report_path })
}

fn input_hash(s: &Scenario) -> Result<String, CliError> {
    let mut echo = s.clone();
    echo.output_dir = PathBuf::new();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&echo)?);
    let mut files = Vec::new();
    if let Some(FieldSource::File { file }) = &s.field {
        files.push(file.clone());
    }
    if let Some(WeightSource::File { file }) = &s.weight {
        files.push(file.clone());
    }
    for f in files {
        for p in [sidecar_path(&f), f] {
            let bytes = fs::read(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            h.update(&bytes);
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Stream `stream` of the scenario's ChaCha generator.
fn rng(s: &Scenario, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(s.seed);
    r.set_stream(stream);
    r
}

fn require<'a, T>(v: &'a Option<T>, what: &str, p: Pipeline) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::Config(format!("{p} needs `{what}`")))
}

fn load_field(s: &Scenario, p: Pipeline) -> Result<VectorField, CliError> {
    Ok(match require(&s.field, "field", p)? {
        FieldSource::Generator(kind) => generate_test_field(kind, &s.grid.grid()),
        FieldSource::File { file } => read_field(file)?,
    })
}

fn rows(m: Mat2) -> [[f64; 2]; 2] {
    m.to_rows()
}

fn cell_record(f: &Field<impl Copy + Default>, k: usize) -> Value {
    let c = f.grid.center(k);
    json!({"cell": k, "x": c[0], "y": c[1]})
}

fn envelope_check(s: &Scenario, out: &Path) -> Result<Checked, CliError> {
    let p = Pipeline::EnvelopeCheck;
    let g = require(&s.gamma, "gamma", p)?;
    if s.field.is_some() {
        return envelope_on_field(s, g, out);
    }
    let ep = &s.params.envelope;
    if !(ep.range > 0.0) {
        return Err(CliError::Config("envelope range must be positive".into()));
    }
    let mut r = rng(s, 0);
    let xs: Vec<Mat2> = (0..ep.samples)
        .map(|_| {
            let mut e = || r.gen_range(-ep.range..ep.range);
            Mat2::new(e(), e(), e(), e())
        })
        .collect();
    let verdicts: Vec<bool> = xs.iter().map(|&x| envelope_member(x, g).member).collect();
    let members = verdicts.iter().filter(|&&v| v).count();
    let mut result = json!({
        "samples": ep.samples,
        "members": members,
        "member_fraction": members as f64 / ep.samples.max(1) as f64,
    });
    let Some(reference) = &ep.reference else {
        return Ok(Checked { pass: true, result });
    };
    // The operator-norm distance to the boundary of E_SO(2) is exactly
    // ||a₋| − k|1 − |a₊|||, since both moduli are 1-Lipschitz in X.
    let boundary = |x: Mat2| match reference.variant {
        GammaVariant::SO2 => {
            let c = to_conformal(x);
            Some((c.a_minus.norm() - reference.k_small() * (1.0 - c.a_plus.norm()).abs()).abs())
        }
        _ => None,
    };
    let mut disagreements = Vec::new();
    for (i, (&x, &v)) in xs.iter().zip(&verdicts).enumerate() {
        let rv = envelope_member(x, reference).member;
        if rv != v {
            disagreements.push((i, x, v, rv, boundary(x)));
        }
    }
    let fraction = disagreements.len() as f64 / ep.samples.max(1) as f64;
    let outside_band: Vec<&(usize, Mat2, bool, bool, Option<f64>)> = disagreements
        .iter()
        .filter(|d| d.4.is_some_and(|b| b > ep.boundary_band))
        .collect();
    let witness = |d: &(usize, Mat2, bool, bool, Option<f64>)| {
        json!({"sample": d.0, "matrix": rows(d.1), "member": d.2, "reference_member": d.3, "boundary_distance": d.4})
    };
    let pass = fraction <= ep.max_disagreement && outside_band.is_empty();
    result["reference"] = json!({
        "disagreements": disagreements.len(),
        "fraction": fraction,
        "max_disagreement": ep.max_disagreement,
        "boundary_band": ep.boundary_band,
        "boundary_distance_known": boundary(Mat2::IDENTITY).is_some(),
        "max_boundary_distance": disagreements.iter().filter_map(|d| d.4).fold(0.0, f64::max),
        "outside_band": outside_band.iter().take(MAX_WITNESSES).map(|d| witness(d)).collect::<Vec<_>>(),
        "witnesses": disagreements.iter().take(MAX_WITNESSES).map(witness).collect::<Vec<_>>(),
    });
    Ok(Checked { pass, result })
}

fn envelope_on_field(s: &Scenario, g: &GammaSpec, out: &Path) -> Result<Checked, CliError> {
    let u = load_field(s, Pipeline::EnvelopeCheck)?;
    let du = finite_diff_gradient(&u);
    let cells: Vec<usize> = du.active_indices().collect();
    let verdicts: Vec<_> = cells.iter().map(|&k| envelope_member(du.values[k], g)).collect();
    let mut gap = vec![0.0; du.grid.len()];
    let mut dist = vec![0.0; du.grid.len()];
    for (&k, v) in cells.iter().zip(&verdicts) {
        gap[k] = v.gap;
        dist[k] = dist_matrix(du.values[k], g);
    }
    write_field(&out.join("du.csv"), &du)?;
    write_field(&out.join("gap.csv"), &Field::from_parts(du.grid.clone(), gap, du.active.clone()))?;
    let dist = Field::from_parts(du.grid.clone(), dist, du.active.clone());
    write_field(&out.join("dist.csv"), &dist)?;
    let failures: Vec<Value> = cells
        .iter()
        .zip(&verdicts)
        .filter(|(_, v)| !v.member)
        .map(|(&k, v)| {
            let mut w = cell_record(&du, k);
            w["du"] = json!(rows(du.values[k]));
            w["gap"] = json!(v.gap);
            w["violating_a"] = json!(rows(v.worst_a));
            w
        })
        .collect();
    let worst_gap = verdicts.iter().map(|v| v.gap).fold(f64::NEG_INFINITY, f64::max);
    Ok(Checked {
        pass: failures.is_empty(),
        result: json!({
            "cells": cells.len(),
            "failures": failures.len(),
            "max_gap": worst_gap,
            "max_distance": dist.max_active(),
            "witnesses": failures.into_iter().take(MAX_WITNESSES).collect::<Vec<_>>(),
        }),
    })
}

fn curve_audit(s: &Scenario) -> Result<Checked, CliError> {
    let g = require(&s.gamma, "gamma", Pipeline::CurveAudit)?;
    let rep = check_elliptic_curve(g)?;
    let sample = |i: usize| match &g.variant {
        GammaVariant::CurveSamples(v) => v[i],
        GammaVariant::ConformalCurve(v) => from_conformal(ConformalCoords {
            a_plus: v[i],
            a_minus: Default::default(),
        }),
        _ => unreachable!("check_elliptic_curve accepts only sampled curves"),
    };
    let (i, j) = rep.worst_pair;
    let pair = json!({
        "pair": [i, j],
        "matrices": [rows(sample(i)), rows(sample(j))],
        "ratio": rep.worst_ratio,
    });
    Ok(Checked {
        pass: rep.is_elliptic,
        result: json!({
            "K": g.k_distortion,
            "is_elliptic": rep.is_elliptic,
            "worst_ratio": rep.worst_ratio,
            "worst_pair": pair,
            "witness": if rep.is_elliptic { Value::Null } else { pair.clone() },
        }),
    })
}

/// The weight of the scenario, with `Du` when it is a distance weight.
fn load_weight(s: &Scenario, p: Pipeline) -> Result<(WeightField, Option<GradientField>), CliError> {
    let source = match (&s.weight, &s.field) {
        (Some(w), _) => w.clone(),
        (None, Some(_)) => WeightSource::Distance,
        (None, None) => return Err(CliError::Config(format!("{p} needs `weight` or `field`"))),
    };
    let grid = s.grid.grid();
    Ok(match source {
        WeightSource::Distance => {
            let g = require(&s.gamma, "gamma", p)?;
            let du = finite_diff_gradient(&load_field(s, p)?);
            (WeightField::new(du.map(|a| dist_matrix(a, g)))?, Some(du))
        }
        WeightSource::Power { alpha, scale } => {
            (WeightField::from_fn(&grid, |x| scale * x[0].hypot(x[1]).powf(alpha))?, None)
        }
        WeightSource::HalfPlaneZero { normal, offset } => (
            WeightField::from_fn(&grid, |x| {
                if normal[0] * x[0] + normal[1] * x[1] > offset {
                    1.0
                } else {
                    0.0
                }
            })?,
            None,
        ),
        WeightSource::File { file } => (WeightField::new(read_field(&file)?)?, None),
    })
}

fn rh_estimate(s: &Scenario, out: &Path) -> Result<Checked, CliError> {
    let p = Pipeline::RhEstimate;
    let rp = &s.params.rh;
    let (w, _) = load_weight(s, p)?;
    write_field(&out.join("w.csv"), &w.w)?;
    let fam = ball_family(w.grid(), s.balls.t, &s.balls.radii)?;
    let (eps, c, estimated) = match (rp.epsilon, rp.c) {
        (Some(e), Some(c)) => (e, c, false),
        _ => (estimate_rh_exponent(&w, &fam, rp.c_budget)?, rp.c_budget, true),
    };
    let mut result = json!({
        "epsilon": eps,
        "C": c,
        "estimated": estimated,
        "family": {"t": fam.t, "radii": fam.radii, "count": fam.len()},
        "a_p": ap_ladder(&w, &fam)?,
    });
    if !(eps > 0.0) {
        result["reason"] = json!("no ε > 0 satisfies the reverse Hölder inequality at C_budget");
        return Ok(Checked { pass: false, result });
    }
    let cert = reverse_holder_check(&w, &fam, eps, c)?;
    result["reverse_holder"] = serde_json::to_value(&cert)?;
    if !cert.pass {
        return Ok(Checked { pass: false, result });
    }
    // RH(ε, C) implies μ(A) ≤ C (|A|/|B|)^{ε/(1+ε)} μ(B) for every A ⊂ B.
    let mut r = rng(s, 0);
    let mut failures = Vec::new();
    for _ in 0..rp.comparison_pairs {
        let b = fam.balls[r.gen_range(0..fam.len())];
        let keep = r.gen_range(0.0..1.0);
        let a: Vec<usize> = w.cells(&b).into_iter().filter(|_| r.gen_bool(keep)).collect();
        let cmp = measure_comparison_check(&w, &b, &a, eps, c)?;
        if !cmp.pass {
            failures.push(json!({"ball": BallRecord::from(b), "comparison": cmp}));
        }
    }
    let dfam = ball_family(w.grid(), rp.doubling_t, &s.balls.radii)?;
    let doubling = if dfam.is_empty() { None } else { Some(doubling_check(&w, &dfam)?) };
    let doubling_finite = doubling.as_ref().is_some_and(|d| d.sup_ratio.is_finite());
    result["measure_comparison"] = json!({
        "pairs": rp.comparison_pairs,
        "failures": failures.len(),
        "witnesses": failures.into_iter().take(MAX_WITNESSES).collect::<Vec<_>>(),
    });
    result["doubling"] = json!({"finite": doubling_finite, "report": doubling});
    let pass = result["measure_comparison"]["failures"] == 0 && doubling_finite;
    Ok(Checked { pass, result })
}

fn density(s: &Scenario, grid: &diffinc::field::Grid2) -> Result<DensityField, CliError> {
    Ok(match &s.params.ma.density {
        DensitySpec::Constant { value } => DensityField::constant(grid, *value),
        DensitySpec::Checkerboard { lambda, block, mollify } => {
            let d = DensityField::checkerboard(grid, *lambda, *block, s.seed)?;
            match mollify {
                Some(m) => mollify_density(&d, *m)?,
                None => d,
            }
        }
    })
}

fn solve(s: &Scenario) -> Result<MASolution, CliError> {
    let dom = ConvexDomain::from_shape(s.grid.ma_domain(), s.grid.h)?;
    let g = density(s, &dom.grid)?;
    Ok(solve_ma(&dom, &g, &s.params.ma.solver)?)
}

fn ma_solve(s: &Scenario, out: &Path) -> Result<Checked, CliError> {
    let sol = solve(s)?;
    sol.write(out)?;
    let tol = sol.report.tol;
    let h = s.grid.h;
    let min_eig = sol.min_hessian_eigenvalue();
    let separation = section_separation(&sol)?;
    // g ≡ c on a disk of radius R about x₀ has φ = √c (|x − x₀|² − R²)/2.
    let exact = match (&s.params.ma.density, s.grid.ma_domain()) {
        (DensitySpec::Constant { value }, DomainShape::Disk { center, radius }) => {
            let err = sol
                .phi
                .active_indices()
                .map(|k| {
                    let x = sol.grid().center(k);
                    let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                    (sol.phi.values[k] - 0.5 * value.sqrt() * (r2 - radius * radius)).abs()
                })
                .fold(0.0, f64::max);
            let bound = s.params.ma.sup_error_factor * h * h;
            Some(json!({"sup_error": err, "bound": bound, "pass": err <= bound}))
        }
        _ => None,
    };
    let convex = min_eig >= -10.0 * tol;
    let exact_pass = exact.as_ref().map_or(true, |e| e["pass"] == true);
    Ok(Checked {
        pass: sol.report.converged && convex && separation > 0.0 && exact_pass,
        result: json!({
            "solver": sol.report,
            "lambda": sol.lambda,
            "cells": sol.phi.active_count(),
            "sup_norm": sol.sup_norm(),
            "min_hessian_eigenvalue": min_eig,
            "convex": convex,
            "section_separation": separation,
            "exact": exact,
        }),
    })
}

fn minty_verify(s: &Scenario, out: &Path) -> Result<Checked, CliError> {
    let mp = &s.params.minty;
    let h = s.grid.h;
    let sol = match mp.source {
        MintySource::Solve => solve(s)?,
        MintySource::Radial => MASolution::radial_fixture(h),
        MintySource::Quadratic { y } => MASolution::quadratic_fixture(Mat2::diag(y[0], y[1]), h)?,
    };
    let lambda = mp.lambda.unwrap_or(sol.lambda);
    let (pair, tm) = minty_transform(&sol)?;
    sol.write(out)?;
    tm.write(out)?;
    let tol = tm.tol.resampling;

    let inclusion = inclusion_report(&tm, lambda);
    let det = det_bound_report(&sol);
    let expansion = expansion_report(&pair, mp.expansion_pairs, rng(s, 0).next_u64());
    let bounds = ComparabilityBounds::sweep(lambda, mp.sweep_points);
    let cmp = comparability_check(&sol, &tm, &bounds)?;
    write_field(&out.join("ratio.csv"), &cmp.ratio)?;
    let probes: Vec<Value> = (0..mp.probe_angles)
        .map(|i| {
            let theta = i as f64 * PI / mp.probe_angles as f64;
            let pr = homeomorphism_probe(&tm, SingularSet::member(theta));
            json!({"theta": theta, "injective": pr.injective, "multiplicity": pr.multiplicity, "witness": pr.witness})
        })
        .collect();
    let opts = PipelineOptions {
        sweep_points: mp.sweep_points,
        ..PipelineOptions::default()
    };
    let pipeline = epsilon_pipeline_with(&sol, &tm, mp.c_budget, &opts)?;

    let checks = json!({
        "inclusion": inclusion.pass(tol),
        "det_bound": det.min_slack >= -ALGEBRAIC_TOL,
        "expansion": expansion.min_slack >= -tol,
        "comparability": cmp.pass,
        "homeomorphism": probes.iter().all(|p| p["injective"] == true),
        "epsilon_pipeline": pipeline.pass,
    });
    let pass = checks.as_object().unwrap().values().all(|v| v == true);
    Ok(Checked {
        pass,
        result: json!({
            "lambda": lambda,
            "h": h,
            "h_omega": tm.grid().h,
            "solver": sol.report,
            "tolerances": tm.tol,
            "checks": checks,
            "inclusion": inclusion,
            "det_bound": det,
            "expansion": expansion,
            "comparability": {
                "min": cmp.min,
                "max": cmp.max,
                "argmin": cell_record(&cmp.ratio, cmp.argmin),
                "argmax": cell_record(&cmp.ratio, cmp.argmax),
                "bounds": cmp.bounds,
                "slack": cmp.slack,
            },
            "probes": probes,
            "pipeline": pipeline,
        }),
    })
}

fn uc_audit(s: &Scenario, out: &Path) -> Result<Checked, CliError> {
    let p = Pipeline::UcAudit;
    let up = &s.params.uc;
    let (w, du) = load_weight(s, p)?;
    let w = match &du {
        Some(_) => WeightField::new(w.w.map(|v| if v <= up.zero_tol { 0.0 } else { v }))?,
        None => w,
    };
    write_field(&out.join("w.csv"), &w.w)?;
    let zero_cells = w.w.active_indices().filter(|&k| w.w.values[k] == 0.0).count();
    let cells = w.w.active_count();
    let mut result = json!({"cells": cells, "zero_cells": zero_cells});

    if zero_cells == cells {
        let (verdict, pass) = match &du {
            Some(du) => {
                let first = du.active_indices().next().map(|k| du.values[k]).unwrap_or(Mat2::ZERO);
                let spread = du
                    .active_indices()
                    .map(|k| (du.values[k] - first).max_abs())
                    .fold(0.0, f64::max);
                result["affine_spread"] = json!(spread);
                result["gradient"] = json!(rows(first));
                if spread <= up.affine_tol {
                    ("affine_branch", true)
                } else {
                    ("zero_not_affine", false)
                }
            }
            None => ("zero", true),
        };
        result["verdict"] = json!(verdict);
        return Ok(Checked { pass, result });
    }

    let fam = ball_family(w.grid(), s.balls.t, &s.balls.radii)?;
    let (eps, c) = match (up.epsilon, up.c) {
        (Some(e), Some(c)) => (e, c),
        _ => (estimate_rh_exponent(&w, &fam, up.c_budget)?, up.c_budget),
    };
    result["epsilon"] = json!(eps);
    result["C"] = json!(c);
    if !(eps > 0.0) {
        result["verdict"] = json!("inconclusive");
        result["reason"] = json!("no ε > 0 satisfies the reverse Hölder inequality at C_budget");
        return Ok(Checked { pass: false, result });
    }
    let rep = dichotomy_audit(&w, &fam, eps, c)?;
    let (verdict, pass) = match rep.verdict {
        Verdict::PositiveAe => ("positive_ae", true),
        Verdict::Zero => ("zero", true),
        Verdict::RhViolation => ("rh_violation", false),
        Verdict::Inconclusive => ("inconclusive", false),
    };
    result["verdict"] = json!(verdict);
    result["dichotomy"] = serde_json::to_value(&rep)?;
    Ok(Checked { pass, result })
}
