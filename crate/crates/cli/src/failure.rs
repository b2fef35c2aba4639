//! Process exit codes and the error type that carries them.

use std::fmt;
use std::path::Path;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub type CliResult<T> = Result<T, Failure>;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<statt::Error> for Failure {
    fn from(e: statt::Error) -> Self {
        use statt::Error as E;
        let code = match &e {
            E::Dimension { .. } | E::Contract(_) | E::Config(_) | E::Unsupported(_) => EXIT_CONFIG,
            E::Load { .. } | E::Io { .. } => EXIT_IO,
            E::NonFinite(_) => EXIT_NUMERIC,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A check ran and did not pass.
    CheckFailed(String),
}

impl Status {
    pub fn code(&self) -> u8 {
        match self {
            Status::Ok => EXIT_OK,
            Status::CheckFailed(_) => EXIT_CHECK,
        }
    }
}
