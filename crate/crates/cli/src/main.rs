use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diffinc_cli::{run_scenario, CliError, Pipeline, RunOptions, Scenario, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "diffinc", version, about = "Run a differential-inclusion experiment scenario")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Envelope membership of random matrices or of the gradient of a field.
    EnvelopeCheck(Common),
    /// Pairwise ellipticity of a sampled target curve.
    CurveAudit(Common),
    /// Reverse Hölder exponent, A_p constants and doubling of a weight.
    RhEstimate(Common),
    /// Monge–Ampère Dirichlet solve with convexity and section checks.
    MaSolve(Common),
    /// Minty transform of a Monge–Ampère solution and the W^{2,1+ε} pipeline.
    MintyVerify(Common),
    /// Unique-continuation dichotomy for dist(Du, Γ) or a given weight.
    UcAudit(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all available cores when unset.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let (pipeline, args) = match cli.command {
        Command::EnvelopeCheck(a) => (Pipeline::EnvelopeCheck, a),
        Command::CurveAudit(a) => (Pipeline::CurveAudit, a),
        Command::RhEstimate(a) => (Pipeline::RhEstimate, a),
        Command::MaSolve(a) => (Pipeline::MaSolve, a),
        Command::MintyVerify(a) => (Pipeline::MintyVerify, a),
        Command::UcAudit(a) => (Pipeline::UcAudit, a),
    };
    let opts = RunOptions {
        seed: args.seed,
        out: args.out,
        threads: args.threads,
    };
    let result = Scenario::load(&args.config).and_then(|s| run_scenario(s, pipeline, &opts));
    match result {
        Ok(outcome) => {
            let r = &outcome.report;
            println!(
                "{} {}: {} ({})",
                r.pipeline,
                r.scenario.name,
                if r.pass { "pass" } else { "property violation" },
                outcome.report_path.display()
            );
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
