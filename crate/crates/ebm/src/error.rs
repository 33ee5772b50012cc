use std::path::PathBuf;

/// Errors from file formats, the model container and the command-line driver.
#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} not found", .0.display())]
    Missing(PathBuf),
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ebm_core::Error),
}

pub type IoResult<T> = Result<T, IoError>;

impl IoError {
    pub(crate) fn format(path: &std::path::Path, reason: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// Maps `NotFound` to [`IoError::Missing`] so callers can tell absent inputs apart.
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::Missing(path.to_path_buf())
        } else {
            IoError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> IoResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> IoResult<()> {
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}
