use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {class} ({name}) has zero frequency")]
    ZeroFrequency { class: usize, name: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("annotation file contains no frames")]
    EmptyAnnotation,

    #[error("tool annotation stride error at line {line}: expected frame {expected}, found {found}")]
    Stride { line: usize, expected: usize, found: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::Io { .. }
            | Error::Json(_)
            | Error::Parse { .. }
            | Error::EmptyAnnotation
            | Error::Stride { .. }
            | Error::CheckpointVersion { .. }
            | Error::CheckpointCorrupt(_) => 3,
            Error::ZeroFrequency { .. } => 4,
            Error::Divergence(_) | Error::Numeric(_) => 5,
            Error::Dimension(_) | Error::Mismatch(_) => 6,
        }
    }
}
