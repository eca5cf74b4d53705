use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = MixrtError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MixrtError {
    #[error(transparent)]
    Core(#[from] mixrt_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing file")]
    MissingFile { path: PathBuf },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{file}: expected {expected}, found {found}")]
    BundleDimension {
        file: String,
        expected: String,
        found: String,
    },
    #[error("unsupported bundle format {found:?} (expected major {expected})")]
    UnsupportedVersion { found: String, expected: String },
    #[error("{0}")]
    Usage(String),
}

/// Process exit category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCategory {
    Usage = 2,
    Io = 3,
    Numeric = 4,
}

impl MixrtError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        let path = path.as_ref().to_path_buf();
        if source.kind() == std::io::ErrorKind::NotFound {
            MixrtError::MissingFile { path }
        } else {
            MixrtError::Io { path, source }
        }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl std::fmt::Display) -> Self {
        MixrtError::Format {
            path: path.as_ref().to_path_buf(),
            msg: msg.to_string(),
        }
    }

    pub fn category(&self) -> ExitCategory {
        use mixrt_core::Error as E;
        match self {
            MixrtError::Usage(_) => ExitCategory::Usage,
            MixrtError::Core(E::InvalidConfig(_)) => ExitCategory::Usage,
            MixrtError::Core(_) => ExitCategory::Numeric,
            _ => ExitCategory::Io,
        }
    }
}
