use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit code for malformed input or configuration.
pub const EXIT_BAD_INPUT: i32 = 2;
/// Process exit code for file system failures.
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("{0}")]
    BadInput(String),
    #[error(transparent)]
    Core(#[from] pnl_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: u64, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            _ => EXIT_BAD_INPUT,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
