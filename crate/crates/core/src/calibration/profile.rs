use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{read_json_file, write_canonical_file};
use crate::domain::{validate_identifier, Label};
use crate::error::{Error, Result};

use super::fit::fit_calibrator;
use super::metrics::{expected_calibration_error, ReliabilityMetrics};
use super::model::{CalibrationMethod, CalibrationModel};

/// A scored, labelled sample used to fit or evaluate a calibrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub sample_id: String,
    pub score: f64,
    pub label: Label,
}

impl LabeledScore {
    pub fn new(sample_id: impl Into<String>, score: f64, label: Label) -> Self {
        Self {
            sample_id: sample_id.into(),
            score,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEce {
    pub method: CalibrationMethod,
    pub ece: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub model: CalibrationModel,
    pub metrics: ReliabilityMetrics,
    pub evaluated: Vec<CandidateEce>,
}

/// Picks the candidate with the lowest validation ECE. Bitwise-equal ECEs are
/// resolved by method order, then by candidate position.
pub fn select_best_calibrator(
    candidates: &[CalibrationModel],
    val: &[(f64, Label)],
    bins: usize,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("calibration candidates"));
    }
    if val.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let labels: Vec<Label> = val.iter().map(|(_, l)| *l).collect();
    let mut best: Option<(usize, ReliabilityMetrics)> = None;
    let mut evaluated = Vec::with_capacity(candidates.len());
    for (i, model) in candidates.iter().enumerate() {
        let calibrated = val
            .iter()
            .map(|(s, _)| model.apply(*s))
            .collect::<Result<Vec<_>>>()?;
        let m = expected_calibration_error(&calibrated, &labels, bins)?;
        evaluated.push(CandidateEce {
            method: model.method(),
            ece: m.ece,
        });
        let better = match &best {
            None => true,
            Some((j, bm)) => {
                m.ece < bm.ece
                    || (m.ece == bm.ece
                        && model.method().tie_rank() < candidates[*j].method().tie_rank())
            }
        };
        if better {
            best = Some((i, m));
        }
    }
    let (idx, metrics) = best.expect("candidates non-empty");
    Ok(Selection {
        model: candidates[idx].clone(),
        metrics,
        evaluated,
    })
}

/// Per-expert calibration record: description, selected map and its
/// validation metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertProfile {
    pub expert_id: String,
    pub desc_text: String,
    pub quality_text: String,
    pub calibration: CalibrationModel,
    pub metrics: Option<ReliabilityMetrics>,
    /// Validation metrics of the uncalibrated scores.
    pub raw_metrics: Option<ReliabilityMetrics>,
    pub candidates: Vec<CandidateEce>,
    pub is_template: bool,
}

pub fn calibration_verdict(ece: f64) -> &'static str {
    if ece < 0.05 {
        "well calibrated"
    } else if ece < 0.15 {
        "moderately calibrated"
    } else {
        "poorly calibrated"
    }
}

pub fn render_quality_text(method: CalibrationMethod, ece: f64, brier: f64) -> String {
    format!(
        "method={method}; ECE={ece:.4}; Brier={brier:.4}; verdict={}",
        calibration_verdict(ece)
    )
}

impl ExpertProfile {
    /// Placeholder profile for an expert without usable labelled data.
    pub fn template(expert_id: impl Into<String>, desc_text: impl Into<String>) -> Self {
        Self {
            expert_id: expert_id.into(),
            desc_text: desc_text.into(),
            quality_text: "method=identity; ECE=n/a; Brier=n/a; verdict=template profile without validation data"
                .into(),
            calibration: CalibrationModel::Identity,
            metrics: None,
            raw_metrics: None,
            candidates: Vec::new(),
            is_template: true,
        }
    }

    pub fn file_name(expert_id: &str) -> String {
        format!("expert_profile_{expert_id}.json")
    }

    pub fn path_in(dir: &Path, expert_id: &str) -> PathBuf {
        dir.join(Self::file_name(expert_id))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        validate_identifier("expert id", &self.expert_id)?;
        let path = Self::path_in(dir, &self.expert_id);
        write_canonical_file(&path, self)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json_file(path)
    }

    /// Validation ECE of the selected map; `None` for templates.
    pub fn ece(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.ece)
    }

    pub fn calibrate(&self, raw_score: f64) -> Result<f64> {
        self.calibration.apply(raw_score)
    }
}

fn is_degenerate(train: &[LabeledScore]) -> bool {
    let first = &train[0];
    let single_class = train.iter().all(|s| s.label == first.label);
    let constant = train.iter().all(|s| s.score == first.score);
    single_class || constant
}

/// Fits every method on `train`, keeps the one with the lowest ECE on `val`,
/// and records its metrics. The identity map is always a candidate, so the
/// selection never calibrates worse than the raw scores on `val`.
pub fn build_expert_profile(
    expert_id: &str,
    desc_text: &str,
    train: &[LabeledScore],
    val: &[LabeledScore],
    bins: usize,
) -> Result<ExpertProfile> {
    validate_identifier("expert id", expert_id)?;
    if train.is_empty() {
        return Err(Error::EmptyInput("profile training split"));
    }
    if val.is_empty() {
        return Err(Error::EmptyInput("profile validation split"));
    }
    let train_ids: HashSet<&str> = train.iter().map(|s| s.sample_id.as_str()).collect();
    if let Some(s) = val.iter().find(|s| train_ids.contains(s.sample_id.as_str())) {
        return Err(Error::OverlappingSplits(s.sample_id.clone()));
    }
    if is_degenerate(train) {
        return Ok(ExpertProfile::template(expert_id, desc_text));
    }
    let train_pairs: Vec<(f64, Label)> = train.iter().map(|s| (s.score, s.label)).collect();
    let val_pairs: Vec<(f64, Label)> = val.iter().map(|s| (s.score, s.label)).collect();

    let mut candidates = CalibrationMethod::FITTED
        .iter()
        .map(|m| fit_calibrator(*m, &train_pairs))
        .collect::<Result<Vec<_>>>()?;
    candidates.push(CalibrationModel::Identity);
    let selection = select_best_calibrator(&candidates, &val_pairs, bins)?;

    let raw_scores: Vec<f64> = val_pairs.iter().map(|p| p.0).collect();
    let labels: Vec<Label> = val_pairs.iter().map(|p| p.1).collect();
    let raw_metrics = expected_calibration_error(&raw_scores, &labels, bins)?;

    Ok(ExpertProfile {
        expert_id: expert_id.to_string(),
        desc_text: desc_text.to_string(),
        quality_text: render_quality_text(
            selection.model.method(),
            selection.metrics.ece,
            selection.metrics.brier,
        ),
        calibration: selection.model,
        metrics: Some(selection.metrics),
        raw_metrics: Some(raw_metrics),
        candidates: selection.evaluated,
        is_template: false,
    })
}
