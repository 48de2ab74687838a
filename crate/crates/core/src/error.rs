use std::path::PathBuf;

use thiserror::Error;

use crate::agent::StageError;
use crate::experts::AdapterError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} scores vs {right} labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("{what} must be a finite probability in [0, 1], got {value}")]
    InvalidProbability { what: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate {method} fit: {reason}")]
    DegenerateFit { method: &'static str, reason: String },

    #[error("need at least {needed} distinct points, found {found}")]
    NotEnoughDistinctPoints { needed: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    #[error("duplicate id: {0}")]
    DuplicateId(String),

    #[error("unknown id: {0}")]
    UnknownId(String),

    #[error("train and validation sets overlap on id {0}")]
    OverlappingSplits(String),

    #[error("inconsistent evidence: {0}")]
    Inconsistent(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Adapter(#[from] AdapterError),

    #[error(transparent)]
    Stage(#[from] StageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub(crate) fn check_probability(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::InvalidProbability { what, value })
    }
}
