use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RecalError {
    #[error("{}: row {row}, column `{column}`: {message}", path.display())]
    Parse {
        path: PathBuf,
        /// One-based data row; the header is row 0.
        row: usize,
        column: String,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{}: model format version {found} is not supported (expected {expected})", path.display())]
    VersionMismatch { path: PathBuf, found: u64, expected: u64 },

    #[error("{}: malformed model: {message}", path.display())]
    Model { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] recal_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RecalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RecalError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 3 for errors raised while fitting, 2 for bad data, flags or config.
    pub fn exit_code(&self) -> i32 {
        use recal_core::Error as E;
        match self {
            RecalError::Core(
                E::DegenerateBins { .. }
                | E::EmptyBin { .. }
                | E::InvalidArity { .. }
                | E::ZeroMass
                | E::QuadratureFailure { .. },
            ) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = RecalError> = std::result::Result<T, E>;
