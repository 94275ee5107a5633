use alloc::string::String;

/// Errors raised by the evaluation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Input data violates a documented invariant (bad values, missing
    /// tokens, too few samples, ...).
    #[error("{0}")]
    Data(String),
    /// An internal invariant failed; indicates a bug rather than bad input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! data_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Data(alloc::format!($($arg)*))
    };
}
pub(crate) use data_err;
