use std::fmt;

use sepaudit::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

/// An error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_data_error() {
            EXIT_DATA
        } else if e.is_numerical() {
            EXIT_NUMERICAL
        } else {
            match e {
                Error::DimensionMismatch { .. } | Error::NotBinary(_) | Error::MissingCover { .. } => EXIT_DATA,
                _ => EXIT_USAGE,
            }
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_DATA, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: EXIT_NUMERICAL, message: format!("serialisation failed: {e}") }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;
