use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Every problem found while checking inputs, one per entry.
    #[error("invalid input:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] psgrank_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Validation(vec![message.into()])
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code: 1 for bad input, 2 for failures while working.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
