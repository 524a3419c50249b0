use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI command, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad data, configuration or arguments (exit code 2).
    #[error("{0}")]
    Input(String),
    /// A row of an input CSV could not be used (exit code 2).
    #[error("{path}: line {line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
    /// Numerical or internal failure (exit code 1).
    #[error("{0}")]
    Numeric(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Row { .. } | CliError::Read { .. } => 2,
            CliError::Numeric(_) | CliError::Write { .. } => 1,
        }
    }
}

impl From<blk_survival::Error> for CliError {
    fn from(e: blk_survival::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
