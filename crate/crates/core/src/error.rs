use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Batch statistics requested over fewer than two values per channel.
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    /// Backward called with a tape that does not belong to the current forward.
    #[error("tape error: {0}")]
    Tape(String),

    /// Gradient sets and parameter sets disagree on keys or extents.
    #[error("bookkeeping error: {0}")]
    Bookkeeping(String),

    #[error("training diverged at batch {batch} (lr {lr}): loss is {loss}")]
    Divergence { batch: usize, lr: f64, loss: f64 },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("not found: {0}")]
    NotFound(PathBuf),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        if !($cond) {
            return Err($crate::error::Error::$variant(format!($($fmt)+)));
        }
    };
}
pub(crate) use ensure;
