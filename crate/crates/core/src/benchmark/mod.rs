//! Conflict-stratified benchmark construction.
//!
//! Each sample is placed in a cell keyed by which signal experts get it wrong
//! and by its ground truth. Sampling equalises cells across source datasets.

mod conflict;
mod sampling;

pub use conflict::{conflict_vector, target_size, ConflictVector, MAX_EXPERTS};
pub use sampling::{
    apportion, dedup_pool, format_coverage, profile_split, stratified_sample, BenchmarkEntry,
    BenchmarkHeader, BenchmarkManifest, DedupOutcome, FillAction, PoolEntry, StratPlan,
};
