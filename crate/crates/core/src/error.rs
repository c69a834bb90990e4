use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no connected graph found for P={agents}, p_edge={p_edge} after {attempts} candidates")]
    Disconnected {
        agents: usize,
        p_edge: f64,
        attempts: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("iterates diverged at iteration {iteration}, agent {agent}")]
    Divergence { iteration: usize, agent: usize },

    #[error("non-finite adjoint at iteration {iteration}, agent {agent}")]
    NonFiniteGradient { iteration: usize, agent: usize },

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
