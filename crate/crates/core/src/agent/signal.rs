use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibration::ExpertProfile;
use crate::domain::{Label, Sample, Verdict, VerdictBasis};
use crate::experts::{score_panel, AdapterError, ExpertAdapter};

use super::baselines::probability_average;
use super::client::{ChatRequest, LanguageModel, Stage};
use super::error::StageError;
use super::guideline::Guideline;

/// Weight of an expert whose profile is a template.
pub const TEMPLATE_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertFailure {
    pub kind: String,
    pub message: String,
}

impl From<&AdapterError> for ExpertFailure {
    fn from(e: &AdapterError) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalEntry {
    pub expert_id: String,
    pub raw_score: Option<f64>,
    pub calibrated_score: Option<f64>,
    /// Stage-2 reliability weight; zero for failed experts.
    pub weight: f64,
    pub desc_excerpt: String,
    pub quality_excerpt: String,
    pub is_template: bool,
    pub failure: Option<ExpertFailure>,
}

impl SignalEntry {
    pub fn call(&self, threshold: f64) -> Option<Label> {
        self.calibrated_score.map(|s| Label::from_score(s, threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalReport {
    /// One entry per panel expert, in panel order.
    pub entries: Vec<SignalEntry>,
    pub aggregate_score: f64,
    pub verdict: Verdict,
    /// The answering experts do not all make the same call.
    pub disagreement_flag: bool,
    pub failed_experts: Vec<String>,
    pub narrative: String,
}

impl SignalReport {
    pub fn entry(&self, expert_id: &str) -> Option<&SignalEntry> {
        self.entries.iter().find(|e| e.expert_id == expert_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalOptions {
    /// Apply profile calibration and `1 - ECE` weights; otherwise raw scores
    /// with equal weights.
    pub use_profiles: bool,
    pub threshold: f64,
}

fn excerpt(text: &str, max_chars: usize) -> String {
    let first = text.split_inclusive(". ").next().unwrap_or(text).trim();
    if first.chars().count() <= max_chars {
        first.to_string()
    } else {
        let cut: String = first.chars().take(max_chars).collect();
        format!("{}...", cut.trim_end())
    }
}

/// Stage-2 weight of a profile: `max(0, 1 - ECE)`, or the template weight.
pub fn profile_weight(profile: Option<&ExpertProfile>) -> f64 {
    match profile.and_then(|p| if p.is_template { None } else { p.ece() }) {
        Some(ece) => (1.0 - ece).max(0.0),
        None => TEMPLATE_WEIGHT,
    }
}

/// Builds the signal report from per-expert raw results in panel order.
pub fn synthesize_signal(
    expert_ids: &[String],
    results: Vec<Result<f64, AdapterError>>,
    profiles: &BTreeMap<String, ExpertProfile>,
    opts: SignalOptions,
    sample_id: &str,
) -> Result<SignalReport, StageError> {
    if expert_ids.is_empty() {
        return Err(StageError::EmptyPanel);
    }
    let mut entries = Vec::with_capacity(expert_ids.len());
    for (id, result) in expert_ids.iter().zip(results) {
        let profile = profiles.get(id);
        let desc_excerpt = profile.map(|p| excerpt(&p.desc_text, 160)).unwrap_or_default();
        let quality_excerpt = profile
            .map(|p| p.quality_text.clone())
            .unwrap_or_else(|| "no profile".into());
        let is_template = profile.is_none_or(|p| p.is_template);
        let entry = match result {
            Ok(raw) => {
                let (calibrated, weight) = if opts.use_profiles {
                    let c = match profile {
                        Some(p) => p.calibration.apply(raw).unwrap_or(raw),
                        None => raw,
                    };
                    (c, profile_weight(profile))
                } else {
                    (raw, 1.0)
                };
                SignalEntry {
                    expert_id: id.clone(),
                    raw_score: Some(raw),
                    calibrated_score: Some(calibrated),
                    weight,
                    desc_excerpt,
                    quality_excerpt,
                    is_template,
                    failure: None,
                }
            }
            Err(e) => SignalEntry {
                expert_id: id.clone(),
                raw_score: None,
                calibrated_score: None,
                weight: 0.0,
                desc_excerpt,
                quality_excerpt,
                is_template,
                failure: Some(ExpertFailure::from(&e)),
            },
        };
        entries.push(entry);
    }
    let ok: Vec<&SignalEntry> = entries.iter().filter(|e| e.failure.is_none()).collect();
    if ok.is_empty() {
        return Err(StageError::AllExpertsFailed {
            sample_id: sample_id.to_string(),
        });
    }
    let scores: Vec<f64> = ok.iter().map(|e| e.calibrated_score.expect("answered")).collect();
    let weights: Vec<f64> = ok.iter().map(|e| e.weight).collect();
    let aggregate_score = probability_average(&scores, &weights)
        .or_else(|_| probability_average(&scores, &vec![1.0; scores.len()]))
        .expect("non-empty scores with unit weights");
    let calls: Vec<Label> = ok.iter().filter_map(|e| e.call(opts.threshold)).collect();
    let disagreement_flag = calls.iter().any(|c| *c != calls[0]);
    let failed_experts = entries
        .iter()
        .filter(|e| e.failure.is_some())
        .map(|e| e.expert_id.clone())
        .collect();
    let mut report = SignalReport {
        entries,
        aggregate_score,
        verdict: Verdict::from_fake_probability(aggregate_score, opts.threshold, VerdictBasis::Signal),
        disagreement_flag,
        failed_experts,
        narrative: String::new(),
    };
    report.narrative = signal_template(&report, opts.threshold);
    Ok(report)
}

/// Deterministic stage-2 narrative.
pub fn signal_template(r: &SignalReport, threshold: f64) -> String {
    let mut fake = Vec::new();
    let mut real = Vec::new();
    for e in &r.entries {
        match e.call(threshold) {
            Some(Label::Fake) => fake.push(e.expert_id.as_str()),
            Some(Label::Real) => real.push(e.expert_id.as_str()),
            None => {}
        }
    }
    let split = if r.disagreement_flag {
        format!("split: fake [{}] vs real [{}]", fake.join(", "), real.join(", "))
    } else {
        "unanimous".to_string()
    };
    let mut text = format!(
        "{} of {} experts answered; weighted calibrated mean {:.4} gives {} ({}).",
        r.entries.len() - r.failed_experts.len(),
        r.entries.len(),
        r.aggregate_score,
        r.verdict.label,
        split
    );
    if !r.failed_experts.is_empty() {
        text.push_str(&format!(" Failed: {}.", r.failed_experts.join(", ")));
    }
    text
}

fn signal_prompt(sample_id: &str, r: &SignalReport) -> String {
    let entries = serde_json::to_string(&r.entries).unwrap_or_default();
    format!(
        "Image id: {sample_id}\nExpert entries: {entries}\nAggregate calibrated score: {:.4}\nVerdict: {}\nWrite the signal-level analysis.",
        r.aggregate_score, r.verdict.label
    )
}

/// Stage 2: scores the panel, calibrates, aggregates and narrates. A failing
/// narrator leaves the template narrative in place.
pub fn stage2_signal(
    sample: &Sample,
    adapters: &[Box<dyn ExpertAdapter>],
    profiles: &BTreeMap<String, ExpertProfile>,
    guideline: &Guideline,
    narrator: Option<&dyn LanguageModel>,
    opts: SignalOptions,
) -> Result<SignalReport, StageError> {
    let ids: Vec<String> = adapters.iter().map(|a| a.expert_id().to_string()).collect();
    let results = score_panel(adapters, sample);
    let mut report = synthesize_signal(&ids, results, profiles, opts, &sample.id)?;
    if let Some(model) = narrator {
        let req = ChatRequest {
            stage: Stage::Signal,
            sample_id: &sample.id,
            attempt: 0,
            system: &guideline.text,
            user: signal_prompt(&sample.id, &report),
            image_locator: None,
        };
        if let Ok(text) = model.complete(&req) {
            report.narrative = text;
        }
    }
    Ok(report)
}
