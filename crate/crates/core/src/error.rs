use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not conform.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A configuration value is out of its admissible range.
    #[error("config error: {field}: {reason}")]
    Config { field: String, reason: String },

    /// An operation was called outside its contract (wrong variant, non-scalar loss, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Results needed to assemble a report are missing.
    #[error("incomplete results: {0}")]
    Incomplete(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Incomplete(_) => 3,
            _ => 1,
        }
    }
}
