use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no mouth region found: no pixel exceeds the {threshold} threshold")]
    NoMouthFound { threshold: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid component count k={k}: must be in 1..={max}")]
    InvalidK { k: usize, max: usize },

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("cannot split: class {label} ({name}) has {found} samples, {required} required")]
    Split {
        label: usize,
        name: String,
        found: usize,
        required: usize,
    },

    #[error("tensor format error: {0}")]
    Format(String),

    #[error("training diverged at epoch {epoch}, sample {sample}: loss is not finite")]
    TrainingDiverged { epoch: usize, sample: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
