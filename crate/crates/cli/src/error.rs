use std::fmt;

use leadrisk::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_MODEL: i32 = 5;
pub const EXIT_MISSING: i32 = 6;

/// A failure with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(EXIT_DATA, message)
    }

    pub fn model(message: impl Into<String>) -> Self {
        Self::new(EXIT_MODEL, message)
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self::new(EXIT_MISSING, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(EXIT_INTERNAL, message)
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Leakage(_) => EXIT_INTERNAL,
            Error::SchemaMismatch { .. } | Error::FormatVersion(_) => EXIT_MODEL,
            Error::InvalidSpec(_) => EXIT_CONFIG,
            Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::MissingColumn(_)
            | Error::DuplicatePid(_)
            | Error::DuplicateInspection(_)
            | Error::InvalidInput(_)
            | Error::SingleClass => EXIT_DATA,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
