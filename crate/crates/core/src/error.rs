use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("unknown frame id {0}")]
    UnknownFrame(u32),

    #[error("missing DBSCAN parameters for class {0}")]
    MissingParams(u16),

    #[error("class {0} has no group assignment")]
    UnassignedClass(u16),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    /// Process exit code for the CLI: 1 invariant violation, 2 I/O or format, 3 config.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 1,
            Error::Config(_) | Error::MissingParams(_) | Error::UnassignedClass(_) => 3,
            _ => 2,
        }
    }
}
