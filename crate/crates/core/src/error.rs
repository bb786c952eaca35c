use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes, dimensions or variant choices that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called in the wrong order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),
    /// A loss or gradient stopped being finite.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The simulator was asked to do something inconsistent with its pool.
    #[error("environment error: {0}")]
    Environment(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
pub(crate) use config_err;
