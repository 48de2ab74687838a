use thiserror::Error;

/// Unrecoverable failure of one pipeline stage.
#[derive(Debug, Error)]
pub enum StageError {
    #[error("{stage} stage: language model unreachable: {detail}")]
    ClientUnavailable { stage: &'static str, detail: String },

    #[error("{stage} stage: reply violates schema after repair retry: {detail}")]
    Schema { stage: &'static str, detail: String },

    #[error("{stage} stage: no scripted reply for sample {sample_id} attempt {attempt}")]
    MissingScript {
        stage: &'static str,
        sample_id: String,
        attempt: u32,
    },

    #[error("signal stage: panel has no signal experts")]
    EmptyPanel,

    #[error("signal stage: every expert failed for sample {sample_id}")]
    AllExpertsFailed { sample_id: String },

    #[error("{stage} stage: missing guideline {guideline}")]
    MissingGuideline {
        stage: &'static str,
        guideline: String,
    },

    #[error("arbitration cites unknown evidence key {key}")]
    DanglingCitation { key: String },
}
