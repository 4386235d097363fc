//! Error types shared across the crate.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A precondition on an argument was violated.
    Validation(String),
    /// Tensor/network shape mismatch.
    Shape(String),
    /// A computation produced NaN or infinity.
    NonFinite(String),
    /// API misuse, e.g. consuming a forward trace twice.
    Contract(String),
    /// Training aborted (divergence, exhausted budget that cannot start, ...).
    Training(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Validation(m) => write!(f, "validation error: {m}"),
            CoreError::Shape(m) => write!(f, "shape error: {m}"),
            CoreError::NonFinite(m) => write!(f, "non-finite value: {m}"),
            CoreError::Contract(m) => write!(f, "contract violation: {m}"),
            CoreError::Training(m) => write!(f, "training failure: {m}"),
        }
    }
}

impl core::error::Error for CoreError {}

impl CoreError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CoreError::Validation(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        CoreError::Shape(msg.into())
    }
}
