//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor or layer shape disagreement; names both sides.
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("backward called without a recorded forward pass")]
    BackwardBeforeForward,

    #[error("non-finite gradient for parameter `{name}`; step rejected")]
    NonFiniteGradient { name: String },

    #[error("training aborted: non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    /// Text-format violation (TACREC, checkpoint, profile, report files).
    #[error("{path}:{line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },

    /// Grasp ids observed on both sides of a train/validation partition.
    #[error("data leakage: grasp ids present in both partitions: {ids:?}")]
    Leakage { ids: Vec<u32> },

    #[error("output path already exists and is not empty: {0}")]
    OutputCollision(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
