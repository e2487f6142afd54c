use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("target rate {target_bps} bit/s is unreachable: required loss probability {p_loss} exceeds 1")]
    UnreachableRate { target_bps: f64, p_loss: f64 },

    #[error("equilibrium solve failed: {0}")]
    Solver(String),

    #[error("interval {requested_s} s is not a multiple of the base interval {base_s} s")]
    IntervalMismatch { requested_s: f64, base_s: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("50% convergence not reached within the largest interval ({largest_s} s)")]
    NotConverged { largest_s: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("missing metadata file {0}")]
    MissingMetadata(PathBuf),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("trace counters inconsistent: {0}")]
    CounterMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
