use std::fmt;
use std::process::ExitCode;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid data or an impossible request (exit 1).
    Domain(String),
    /// A path could not be read or written (exit 2).
    Io(String),
    /// The config file does not match the schema (exit 3).
    Schema(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) => 2,
            CliError::Schema(_) => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(m) => write!(f, "error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Schema(m) => write!(f, "config error: {m}"),
        }
    }
}

impl From<affuse_core::Error> for CliError {
    fn from(e: affuse_core::Error) -> Self {
        match e {
            affuse_core::Error::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}
