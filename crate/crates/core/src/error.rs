use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Provider,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty transcript")]
    EmptyTranscript,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("registry error in attribute `{attribute}`: {message}")]
    Registry { attribute: String, message: String },

    #[error("{0}")]
    Data(String),

    #[error("could not extract a value: {0}")]
    ValueParse(String),

    #[error("value {value} outside [0, 1]")]
    Range { value: f64 },

    #[error("prompt needs {tokens} tokens but the context budget is {budget}; re-slice with a smaller target")]
    ContextBudget { tokens: usize, budget: usize },

    #[error("replay session has no response for key {key} (job {job_id})")]
    ReplayMiss { key: String, job_id: String },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("degenerate computation: {0}")]
    Degenerate(String),

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Usage(_) => ErrorKind::Usage,
            Error::Provider(_) | Error::ReplayMiss { .. } => ErrorKind::Provider,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
