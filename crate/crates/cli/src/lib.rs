//! Library surface of the command-line front end; the binary in `main.rs`
//! is a thin argument-parsing wrapper around these functions, and the
//! acceptance suite drives them directly.

pub mod commands;
pub mod config;

use thiserror::Error;

/// Command failures, classified by exit code: config errors exit 2, data
/// errors 3, numerical failures 4.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<driftblend::dataio::DataError> for CliError {
    fn from(e: driftblend::dataio::DataError) -> Self {
        use driftblend::dataio::DataError as D;
        match e {
            D::UnstableParams(_) | D::Dynamics(_) => CliError::Numerical(e.to_string()),
            D::BadFraction(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<driftblend::flowfield::FieldError> for CliError {
    fn from(e: driftblend::flowfield::FieldError) -> Self {
        CliError::Data(e.to_string())
    }
}
