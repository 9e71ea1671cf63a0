use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown activation `{0}` (expected sigmoid, tanh or identity)")]
    UnknownActivation(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(
        "singular covariance in {view} view (min eigenvalue {min_eig:e}); use a positive ridge"
    )]
    SingularCovariance { view: &'static str, min_eig: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::DimensionMismatch {
        op,
        detail: detail.into(),
    })
}
