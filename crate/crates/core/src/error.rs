use alloc::string::String;

use crate::lang::Lang;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A vector with zero norm reached a cosine-based computation.
    #[error("degenerate input: {0} has zero norm")]
    ZeroNorm(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not enough data: need {needed}, have {available}")]
    NotEnoughData { needed: usize, available: usize },
    #[error("unknown language {0}")]
    UnknownLanguage(Lang),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
