use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shape, symmetry, range).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    /// Normalized energy requested for an all-zero feature matrix.
    #[error("cannot normalize energy of an all-zero feature matrix")]
    Normalization,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {location}")]
    NonFinite { location: String },

    #[error("solver diverged at step {step} (t = {t})")]
    SolverDivergence { step: usize, t: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// Wraps another error with the node / noise level it occurred at.
    #[error("node {node}, tau {tau}: {source}")]
    AtNode {
        node: usize,
        tau: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. } | Error::SolverDivergence { .. } | Error::Normalization => true,
            Error::AtNode { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// True for failures caused by files on disk (missing, malformed, inconsistent).
    pub fn is_data(&self) -> bool {
        match self {
            Error::Parse { .. } | Error::Data { .. } | Error::Io { .. } | Error::Json { .. } => true,
            Error::AtNode { source, .. } => source.is_data(),
            _ => false,
        }
    }
}
