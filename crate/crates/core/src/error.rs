use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("softmax row {0} is entirely masked")]
    DegenerateRow(usize),
    #[error("unknown token id {id} (vocabulary size {vocab})")]
    UnknownToken { id: usize, vocab: usize },
    #[error("missing weight: {0}")]
    MissingWeight(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },
    #[error("keyspace too large for exhaustive search: d={dim} exceeds cap {cap}")]
    KeyspaceTooLarge { dim: usize, cap: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidDimension(alloc::format!($($arg)*))
    };
}
pub(crate) use dim_err;
