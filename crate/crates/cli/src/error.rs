use sonnet_core::Error;
use thiserror::Error as ThisError;

/// Failure of a command, split by the exit status it maps to.
#[derive(Debug, ThisError)]
pub enum CliError {
    /// Bad configuration, input files or arguments. Exit status 2.
    #[error("{0}")]
    Usage(String),
    /// Anything that went wrong while running a valid request. Exit status 1.
    #[error("{0}")]
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

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Schema(_) | Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Writes an output file; failures here are runtime errors.
pub(crate) fn write_output(path: &std::path::Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
