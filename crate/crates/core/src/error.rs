//! Error type shared by all core modules.

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration (sizes, ranges, incompatible parameters).
    Config(String),
    /// Runtime shape mismatch between buffers that were built from
    /// compatible configs but disagree at the call site.
    Shape(String),
    /// Numerical failure: non-finite values, rank deficiency, values below
    /// a required floor.
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "config: {msg}"),
            Error::Shape(msg) => write!(f, "shape: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric: {msg}"),
        }
    }
}

#[cfg(test)]
impl std::error::Error for Error {}
