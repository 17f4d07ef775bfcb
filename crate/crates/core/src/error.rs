use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem field `{field}`: {reason}")]
    InvalidProblem { field: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// Residual is exactly zero; the flow is at its equilibrium and the
    /// velocity field is undefined there.
    #[error("at equilibrium: residual norm is zero")]
    AtEquilibrium,

    #[error("singular linear system at flow time {time}: condition estimate {condition:e}")]
    SingularSystem { time: f64, condition: f64 },

    #[error("step size underflow at t = {time} (h = {step:e})")]
    StepUnderflow {
        time: f64,
        step: f64,
        last_state: Vec<f64>,
    },

    #[error("sign enumeration supports at most {max} variables, got {n}")]
    EnumerationTooLarge { n: usize, max: usize },

    #[error("oracle did not converge after {iterations} iterations (fixed-point residual {residual:e})")]
    OracleNotConverged { iterations: usize, residual: f64 },

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a flow time to errors that carry one.
    pub(crate) fn at_time(self, t: f64) -> Self {
        match self {
            Error::SingularSystem { condition, .. } => Error::SingularSystem { time: t, condition },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
