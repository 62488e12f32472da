use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument does not fit the network, stream or buffer it is used with.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A configuration value is out of range.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    /// An operation ran before the state it needs was populated.
    #[error("state error: {0}")]
    State(String),
    /// Training produced a non-finite loss.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

macro_rules! invalid_input {
    ($($arg:tt)*) => { $crate::error::Error::InvalidInput(alloc::format!($($arg)*)) };
}
macro_rules! invalid_spec {
    ($($arg:tt)*) => { $crate::error::Error::InvalidSpec(alloc::format!($($arg)*)) };
}
pub(crate) use invalid_input;
pub(crate) use invalid_spec;
