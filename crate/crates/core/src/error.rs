use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes, extents or parameter layouts do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// An argument is outside the accepted range.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An input value lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A NaN or infinity appeared where a finite value was required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The statistic is undefined (zero variance and zero mean difference).
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),
    /// A gradient record was used for a second backward pass.
    #[error("gradient record already consumed")]
    RecordConsumed,
    /// Text could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
