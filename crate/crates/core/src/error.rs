use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two operands whose shapes are incompatible for `op`.
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: input too short ({detail})")]
    Underflow { op: &'static str, detail: String },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    /// A precondition of an operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported rate {0} (expected one of 1, 2, 4, 8)")]
    UnsupportedRate(usize),

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("sample {id} has length {len}, exceeding capacity {capacity}")]
    Oversize { id: usize, len: usize, capacity: usize },

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("protocol error at t={timestamp_ms}ms: {detail}")]
    Protocol { timestamp_ms: u64, detail: String },

    #[error("ordering error: timestamp {timestamp_ms}ms precedes {last_ms}ms")]
    Ordering { timestamp_ms: u64, last_ms: u64 },

    #[error("unsupported audio format: {0}")]
    AudioFormat(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
