//! Error type with the process exit-code convention: 0 ok, 2 config, 3
//! numerical abort.

use std::fmt;

#[derive(Debug)]
pub enum AppError {
    /// Bad flags, malformed files, unusable paths.
    Config(String),
    Io(String),
    /// Non-finite values or other numerical failures.
    Numeric(String),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Io(_) => 2,
            AppError::Numeric(_) => 3,
        }
    }

    /// Machine-parseable prefix written to stderr.
    pub fn category(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Io(_) => "io",
            AppError::Numeric(_) => "numeric",
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) | AppError::Io(m) | AppError::Numeric(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for AppError {}

impl From<vocdiff_core::Error> for AppError {
    fn from(e: vocdiff_core::Error) -> Self {
        match e {
            vocdiff_core::Error::Config(m) | vocdiff_core::Error::Shape(m) => AppError::Config(m),
            vocdiff_core::Error::Numeric(m) => AppError::Numeric(m),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::Config(format!("json: {e}"))
    }
}
