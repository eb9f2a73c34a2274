use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corpus too small: {0}")]
    Size(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("lookup error: no entry for id {0:?}")]
    Lookup(String),

    #[error("numeric error on document {doc}: {message}")]
    Numeric { doc: String, message: String },

    #[error("remote error for {label:?}: {status}")]
    Remote { label: String, status: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl Error {
    /// Short stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Size(_) => "size",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Lookup(_) => "lookup",
            Error::Numeric { .. } => "numeric",
            Error::Remote { .. } => "remote",
            Error::Protocol(_) => "protocol",
            Error::Internal(_) => "internal",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
