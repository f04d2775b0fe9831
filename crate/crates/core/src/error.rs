use std::path::PathBuf;

use crate::optim::TrainRecord;

pub type Result<T> = std::result::Result<T, Error>;

/// Which half of a dense layer a gradient entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamPart {
    Weight,
    Bias,
}

impl std::fmt::Display for ParamPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamPart::Weight => f.write_str("weight"),
            ParamPart::Bias => f.write_str("bias"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("non-finite gradient in layer {layer} {part}")]
    NonFiniteGradient { layer: usize, part: ParamPart },

    #[error("output {output} is degenerate: <u,u> = {norm:e}")]
    DegenerateFunction { output: usize, norm: f64 },

    #[error("run aborted at epoch {epoch} after {failures} failed steps")]
    AbortedRun {
        epoch: usize,
        failures: usize,
        record: Box<TrainRecord>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
