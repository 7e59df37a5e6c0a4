use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by tensor operations, the optimizer and the checkpoint
/// container. `Usage` and `ShapeMismatch` indicate a caller bug;
/// `NonFinite` indicates a numeric blow-up; the remaining variants are
/// distinguished so callers can tell a corrupt file from a stale config.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: {msg}")]
    Usage { op: &'static str, msg: String },

    #[error("{op}: produced non-finite values")]
    NonFinite { op: &'static str },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("corrupt tensor payload: {0}")]
    CorruptPayload(String),

    #[error("config fingerprint mismatch: checkpoint has {found}, current config is {expected}")]
    FingerprintMismatch { expected: String, found: String },
}

impl Error {
    pub fn usage(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Usage { op, msg: msg.into() }
    }

    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch { op, detail: detail.into() }
    }
}
