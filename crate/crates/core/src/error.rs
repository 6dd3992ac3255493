//! Error type shared by every pipeline stage.

use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes. The CLI maps these onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data.
    Data,
    /// Numerical failure such as a diverging loss.
    Numeric,
    /// An artifact was produced by a different model than the one in use.
    Stale,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{feature}: value {value} outside [0, {max}]")]
    Range { feature: String, value: f64, max: f64 },

    #[error("missing column(s): {}", .0.join(", "))]
    Schema(Vec<String>),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("{kind} {id}: sentence template needs attribute '{key}'")]
    Template { kind: String, id: String, key: String },

    #[error("{0}")]
    Graph(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension { context: String, expected: String, actual: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("model kind mismatch: expected {expected}, found {found}")]
    ModelKind { expected: String, found: String },

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("aggregation: client {client}, layer '{layer}': {message}")]
    Aggregation { client: usize, layer: String, message: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{0}")]
    Explain(String),

    #[error("quality dataset was built from model {expected}, current model is {actual}")]
    StaleDataset { expected: String, actual: String },

    #[error("{0}")]
    InvalidArgument(String),

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

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Training { .. } | Error::NonFinite(_) => ErrorClass::Numeric,
            Error::StaleDataset { .. } => ErrorClass::Stale,
            Error::Client { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
