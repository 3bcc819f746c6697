use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed config {}: {msg}", path.display())]
    BadConfig { path: PathBuf, msg: String },

    #[error("invalid flag combination: {0}")]
    Flags(String),

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Core(#[from] ssmp_core::Error),
}

impl CliError {
    /// Process exit status. Usage errors reported by the argument parser
    /// exit with 2 before reaching here.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::MissingFile(_) => 3,
            CliError::BadConfig { .. } => 4,
            CliError::Flags(_) => 5,
            CliError::Write { .. } => 6,
            CliError::Core(ssmp_core::Error::Format(_) | ssmp_core::Error::Json(_)) => 4,
            CliError::Core(ssmp_core::Error::Io(e)) if e.kind() == io::ErrorKind::NotFound => 3,
            CliError::Core(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn flags(msg: impl Into<String>) -> CliError {
    CliError::Flags(msg.into())
}
