//! Error classes shared by every module.
//!
//! The variant names double as the machine-readable error class written to
//! the run status file, see [`Error::class`].

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error on `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("metric validity violated: min dz(phi) = {min_dzphi:.6e} below required {required:.6e}")]
    MetricValidity { min_dzphi: f64, required: f64 },

    #[error("elliptic solver failed after {iterations} iterations (relative residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("history too short: need {needed} stored levels, have {available}")]
    HistoryDepth { needed: usize, available: usize },

    #[error("time step {dt:.6e} exceeds stability limit {limit:.6e}")]
    StepSize { dt: f64, limit: f64 },

    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: String, found: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short identifier of the error class.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::MetricValidity { .. } => "metric_validity",
            Error::SolverFailure { .. } => "solver_failure",
            Error::HistoryDepth { .. } => "history_depth",
            Error::StepSize { .. } => "step_size",
            Error::Shape { .. } => "shape",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }
}
