//! Signal-level expert registry and scoring adapters.
//!
//! Experts are black boxes reached over HTTP, through a long-lived
//! subprocess, or by replaying recorded scores. The registry keeps them in a
//! stable ordinal order that defines the panel order everywhere else.

mod adapters;
mod error;
mod registry;

pub use adapters::{
    score_panel, ExpertAdapter, HttpAdapter, ReplayAdapter, ReplayRecord, ScoreRequest,
    SubprocessAdapter,
};
pub use error::AdapterError;
pub use registry::{
    build_adapter, build_adapters, endpoint_override_var, register_expert, remove_expert,
    resolved_endpoint, AdapterSpec, AnalyzerRegistration, ExpertRegistration, PanelConfig,
    ProfileData, DEFAULT_TIMEOUT_MS,
};
