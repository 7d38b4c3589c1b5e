use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid simplicial complex: {0}")]
    InvalidComplex(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid diagram: {0}")]
    InvalidDiagram(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("label {0} is outside the class range")]
    Label(usize),

    #[error("format error: {0}")]
    Format(String),

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
}

impl Error {
    /// Short machine-readable tag, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::InvalidComplex(_) => "InvalidComplex",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::InvalidDiagram(_) => "InvalidDiagram",
            Error::Shape { .. } => "ShapeError",
            Error::Label(_) => "LabelError",
            Error::Format(_) => "FormatError",
            Error::Io { .. } => "IoError",
            Error::Json { .. } => "JsonError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
