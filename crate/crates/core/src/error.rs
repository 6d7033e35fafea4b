use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("parameter outside quantized domain: {0}")]
    Quantization(String),

    #[error("wrong parameter mode: expected {expected}, got {got}")]
    Mode { expected: &'static str, got: &'static str },

    #[error("hard threshold hit exactly at 0.5 (frame {frame}, unit {unit})")]
    AmbiguousThreshold { frame: usize, unit: usize },

    #[error("insufficient precision: {needed} decimal digits required for {frames} frames, got {got}")]
    Precision { needed: u32, frames: usize, got: u32 },

    #[error("image has {0} columns, at least 2 are needed for windowing")]
    TooFewColumns(usize),

    #[error("invalid image: {0}")]
    InvalidImage(crate::wlang::Violation),

    #[error("empty training set")]
    EmptyData,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
