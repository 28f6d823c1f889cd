use std::fmt;
use std::path::{Path, PathBuf};

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Backend(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Backend(_) => 4,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Backend(m) => write!(f, "backend: {m}"),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
