use std::fmt;

use mpc_core::CoreError;

/// Failure classes with stable exit codes: 2 config, 3 input, 4 numeric
/// divergence, 1 anything else.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Input(String),
    Divergence(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Divergence(m) => write!(f, "divergence: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => CliError::Config(m),
            CoreError::Divergence(m) => CliError::Divergence(m),
            CoreError::Input(m)
            | CoreError::Format(m)
            | CoreError::Shape(m)
            | CoreError::Domain(m)
            | CoreError::UndefinedMetric(m) => CliError::Input(m),
            CoreError::State(m) | CoreError::NonFinite(m) => CliError::Internal(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
