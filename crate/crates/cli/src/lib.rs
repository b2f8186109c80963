//! Batch experiment runner: reads a scenario, runs one pipeline of the
//! `diffinc` library deterministically, and writes a JSON report plus CSV
//! fields.
//!
//! Exit codes: `0` all properties pass, `2` a property fails (the report
//! lists witnesses), `1` execution error, `64` malformed configuration.

pub mod json;
pub mod run;
pub mod scenario;

pub use run::{run_scenario, Outcome, Report, RunOptions, REPORT_FILE};
pub use scenario::{Pipeline, Scenario};

use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("malformed configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Exec(#[from] diffinc::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_ERROR,
        }
    }
}
