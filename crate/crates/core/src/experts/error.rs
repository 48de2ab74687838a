use std::time::Duration;

use thiserror::Error;

/// Failure of a single expert call. Every variant names the expert.
#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("expert {expert_id}: no reply within {timeout:?}")]
    Timeout { expert_id: String, timeout: Duration },

    #[error("expert {expert_id}: unreachable: {detail}")]
    Unreachable { expert_id: String, detail: String },

    #[error("expert {expert_id}: malformed reply: {detail}")]
    Malformed { expert_id: String, detail: String },

    #[error("expert {expert_id}: score {score} outside [0, 1]")]
    OutOfRange { expert_id: String, score: f64 },

    #[error("expert {expert_id}: no score for sample {sample_id}")]
    UnknownSample { expert_id: String, sample_id: String },
}

impl AdapterError {
    pub fn expert_id(&self) -> &str {
        match self {
            AdapterError::Timeout { expert_id, .. }
            | AdapterError::Unreachable { expert_id, .. }
            | AdapterError::Malformed { expert_id, .. }
            | AdapterError::OutOfRange { expert_id, .. }
            | AdapterError::UnknownSample { expert_id, .. } => expert_id,
        }
    }

    /// Short machine-readable kind, used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            AdapterError::Timeout { .. } => "timeout",
            AdapterError::Unreachable { .. } => "unreachable",
            AdapterError::Malformed { .. } => "malformed",
            AdapterError::OutOfRange { .. } => "out_of_range",
            AdapterError::UnknownSample { .. } => "unknown_sample",
        }
    }
}
