use thiserror::Error;

use crate::mongeampere::MASolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("operation not supported for Γ variant `{0}`")]
    UnsupportedVariant(&'static str),

    #[error("invalid target set: {0}")]
    InvalidGamma(String),

    #[error("ball {center:?} r={radius} contains no masked cell")]
    EmptyBall { center: [f64; 2], radius: f64 },

    #[error("ball family is empty")]
    EmptyFamily,

    #[error("unknown field kind `{0}`")]
    UnknownKind(String),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("section Z_t is empty")]
    EmptySection,

    #[error(
        "Monge-Ampère iteration stopped after {iterations} steps with residual {residual:e}"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Box<MASolution>,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("resampling failed on {} source cells", cells.len())]
    Resampling { cells: Vec<usize> },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
