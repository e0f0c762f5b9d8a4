use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output directory {} does not exist", .0.display())]
    MissingDirectory(PathBuf),

    #[error("{}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        #[source]
        source: snapzip_core::Error,
    },

    #[error("{model} at param {param}, L = {l}: {source}")]
    Task {
        model: String,
        param: f64,
        l: usize,
        #[source]
        source: snapzip_core::Error,
    },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] snapzip_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}
