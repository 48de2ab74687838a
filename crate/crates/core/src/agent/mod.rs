//! Staged inference: semantic review, signal synthesis, and on conflict the
//! cluster lookup plus arbitration. Also the parameter-free fusion baselines.
//!
//! Language-model calls go through [`LanguageModel`]; the scripted client
//! replays canned replies for hermetic runs and `None` selects deterministic
//! templates and the rule arbiter.

mod arbitrate;
mod baselines;
mod client;
mod cluster;
mod error;
mod evidence;
mod guideline;
mod pipeline;
mod semantic;
mod signal;

pub use arbitrate::{
    arbitrate_live, arbitrate_rule, blend, rule_weights, weighted_signal, ArbiterConfig,
    ArbiterMode, ArbitrationRecord, RationaleEntry, WeightSource, DEFAULT_LAMBDA,
};
pub use baselines::{majority_of_labels, majority_vote, probability_average};
pub use client::{
    extract_json_block, write_transcript, ChatRequest, ClientConfig, ClientMode, LanguageModel,
    LiveClient, ScriptedClient, ScriptedReply, Stage, LLM_API_KEY_VAR, LLM_ENDPOINT_VAR,
};
pub use cluster::{cluster_template, stage3_cluster, ClusterEntry, ClusterReport};
pub use error::StageError;
pub use evidence::{detect_conflict, EvidenceSet};
pub use guideline::{Guideline, GuidelineId, GuidelineSet, BUILTIN_VERSION};
pub use pipeline::{DiagnosticReport, Pipeline, PipelineConfig, PipelineFailure, PipelineParts};
pub use semantic::{
    parse_semantic_reply, render_semantic_reply, stage1_semantic, Anomaly, AnomalyCategory,
    SemanticReport,
};
pub use signal::{
    profile_weight, signal_template, stage2_signal, synthesize_signal, ExpertFailure,
    SignalEntry, SignalOptions, SignalReport, TEMPLATE_WEIGHT,
};
