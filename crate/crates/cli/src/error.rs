use std::fmt;
use std::process::ExitCode;

use trapped_pressure::Error;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or parameters (exit 2).
    Invalid(String),
    /// The computation finished but a quality gate failed (exit 3).
    Quality(String),
    /// Numerical or I/O failure inside a computation (exit 4).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Invalid(_) => 2,
            CliError::Quality(_) => 3,
            CliError::Numerical(_) => 4,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Quality(m) => write!(f, "quality gate failed: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_invalid_input() {
            CliError::Invalid(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Numerical(format!("serialization: {e}"))
    }
}
