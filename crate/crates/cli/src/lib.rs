//! Experiment harness: configuration, checkpoints, run manifests, and report
//! generation for the contract-design toolkit.

pub mod checkpoint;
pub mod config;
pub mod manifest;
pub mod report;

use std::fmt;

/// Harness-level error, split by exit code: usage/config problems exit 2,
/// runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<contract_design::Error> for CliError {
    fn from(err: contract_design::Error) -> Self {
        match err {
            contract_design::Error::Config(_) => CliError::Usage(err.to_string()),
            _ => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
