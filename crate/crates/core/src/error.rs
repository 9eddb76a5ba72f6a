use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: expected 2 or 3 positive extents")]
    InvalidShape(Vec<usize>),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("expected {expected} values for the declared shape, got {found}")]
    ValueCount { expected: usize, found: usize },

    #[error("non-finite value at linear index {0}")]
    NonFinite(usize),

    #[error("mask has no foreground cells")]
    EmptyMask,

    #[error("dimension mismatch: grid has {grid} axes, parameter has {param}")]
    DimensionMismatch { grid: usize, param: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("window {window} does not fit in grid of shape {shape:?}")]
    WindowTooLarge { window: usize, shape: Vec<usize> },

    #[error("value outside the domain of the loss: {0}")]
    Domain(String),

    #[error("no eligible road pixel for error injection")]
    NoEligiblePixel,

    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("dtype mismatch in {path}: expected {expected}, found {found}")]
    DtypeMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("payload of {path} holds {found} bytes, header requires {expected}")]
    PayloadSize {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("malformed payload in {path}: {reason}")]
    MalformedPayload { path: PathBuf, reason: String },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
