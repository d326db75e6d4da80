use alloc::string::String;

/// Errors raised by the training core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("instance too large: {0}")]
    Refused(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
