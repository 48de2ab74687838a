//! Multi-expert fusion engine for AI-generated image detection.
//!
//! Detector scores are calibrated per expert, their reliability is profiled
//! per feature-space cluster, and a staged pipeline resolves disagreement
//! between a semantic analyzer and the signal-level panel into an auditable
//! report.

pub mod agent;
pub mod benchmark;
pub mod calibration;
pub mod clustering;
pub mod codec;
pub mod domain;
pub mod error;
pub mod experts;
pub mod profiling;
pub mod report;
pub mod simulator;
pub mod store;

pub use error::{Error, Result};
