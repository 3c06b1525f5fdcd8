use std::fmt;
use std::process::ExitCode;

/// Failures mapped onto the documented exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Exit 2: invalid configuration or model.
    Config(String),
    /// Exit 3: non-finite states with `fail_on_divergence` set.
    Divergence(String),
    /// Exit 4: reading or writing files.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Divergence(m) => write!(f, "numerical divergence: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<episde::Error> for CliError {
    fn from(e: episde::Error) -> Self {
        match e {
            episde::Error::Io(m) => CliError::Io(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
