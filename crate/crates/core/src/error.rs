use alloc::string::String;

/// Errors raised by the kernels in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// An object is not in a state the operation can consume (e.g. an empty histogram).
    #[error("invalid state: {0}")]
    InvalidState(String),
    /// Two arrays that must agree in length or shape do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
