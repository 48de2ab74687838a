//! Post-hoc calibration of expert scores and construction of expert profiles.
//!
//! Five fitted maps are supported (temperature, Platt, isotonic, histogram
//! binning and beta) plus the identity. Selection uses binned ECE on a held-out
//! split.

mod fit;
mod metrics;
mod model;
mod pava;
mod profile;

pub use fit::{fit_calibrator, HISTOGRAM_FIT_BINS};
pub use metrics::{
    bin_index, brier_score, expected_calibration_error, BinStat, ReliabilityMetrics,
    DEFAULT_ECE_BINS,
};
pub use model::{CalibrationMethod, CalibrationModel, LOGIT_EPS};
pub use pava::pava;
pub use profile::{
    build_expert_profile, calibration_verdict, render_quality_text, select_best_calibrator,
    CandidateEce, ExpertProfile, LabeledScore, Selection,
};
