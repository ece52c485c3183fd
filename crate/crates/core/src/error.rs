use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the analytics core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error in column `{column}`: {reason}")]
    Schema { column: String, reason: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unknown {kind} `{id}`")]
    Lookup { kind: &'static str, id: String },

    #[error("domain error in column `{column}`: {reason}")]
    Domain { column: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model integrity error: {0}")]
    ModelIntegrity(String),

    #[error("problem too large: {0}")]
    Size(String),

    #[error("empty data: {0}")]
    Empty(String),

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn schema(column: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema { column: column.into(), reason: reason.into() }
    }

    pub(crate) fn domain(column: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Domain { column: column.into(), reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, reason: reason.into() }
    }
}
