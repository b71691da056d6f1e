use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed audio file: {0}")]
    Format(String),
    #[error("unsupported audio encoding: {0}")]
    Unsupported(String),
    #[error("silent input: cannot normalize an all-zero signal")]
    SilentInput,
    #[error("size error: {0}")]
    Size(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("insufficient pitch marks: note has {found} epochs, need at least 2")]
    InsufficientMarks { found: usize },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("invalid song spec: {0}")]
    Spec(String),
    #[error("state error: {0}")]
    State(String),
    #[error("degenerate note: {frames} frames, need at least {min}")]
    DegenerateNote { frames: usize, min: usize },
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 usage/config, 2 I/O, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Format(_)
            | Error::Unsupported(_)
            | Error::SilentInput
            | Error::CorruptCheckpoint(_)
            | Error::Json(_) => 2,
            Error::Numeric(_) => 3,
            _ => 1,
        }
    }
}
