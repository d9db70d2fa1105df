use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    File { path: PathBuf, message: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("layout: {0}")]
    Layout(String),

    #[error("model: {0}")]
    Model(String),

    #[error("training: {0}")]
    Training(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("ridge: {0}")]
    Ridge(String),

    #[error("synthetic data: {0}")]
    Synth(String),

    #[error(transparent)]
    Autodiff(#[from] resgene_autodiff::AutodiffError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
