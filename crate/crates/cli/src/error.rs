use std::fmt;
use std::path::Path;

use apo_core::ApoError;

/// A failure carrying the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_WRITE: u8 = 3;
pub const EXIT_MISSING: u8 = 4;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self { code: EXIT_MISSING, message: message.into() }
    }

    pub fn write(path: &Path, err: impl fmt::Display) -> Self {
        Self { code: EXIT_WRITE, message: format!("cannot write {}: {err}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ApoError> for CliError {
    fn from(err: ApoError) -> Self {
        let code = match err {
            ApoError::Io(_) => EXIT_WRITE,
            _ => EXIT_USAGE,
        };
        Self { code, message: err.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
