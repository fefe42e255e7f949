use std::path::{Path, PathBuf};

/// CLI failure, split by exit code: usage and I/O problems exit with 2,
/// numerical or contract failures with 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A file exists but its contents are malformed.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error(transparent)]
    Numerical(#[from] isingkit::Error),
    /// Inputs are well-formed but contradict each other.
    #[error("{0}")]
    Contract(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::Input { .. } => 2,
            CliError::Numerical(_) | CliError::Contract(_) => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, message: impl std::fmt::Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
