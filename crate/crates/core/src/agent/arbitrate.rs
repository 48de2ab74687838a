use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{Label, Modality, Verdict, VerdictBasis};

use super::client::{extract_json_block, ChatRequest, LanguageModel, Stage};
use super::evidence::EvidenceSet;
use super::error::StageError;
use super::guideline::Guideline;
use super::semantic::repair_prompt;

pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArbiterMode {
    Rule,
    Live,
}

/// Where an expert's arbitration weight came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSource {
    /// Mean cluster-local F1 over usable modalities.
    ClusterLocal,
    /// The stage-2 profile weight.
    Profile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationaleEntry {
    pub key: String,
    pub claim: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationRecord {
    pub verdict: Verdict,
    pub mode: ArbiterMode,
    /// Fake-class probability behind the verdict.
    pub score: f64,
    /// Reliability-weighted mean of calibrated expert scores.
    pub signal_score: f64,
    /// Semantic verdict mapped to a fake-class probability.
    pub semantic_score: Option<f64>,
    pub rationale: Vec<RationaleEntry>,
    pub weights_used: BTreeMap<String, f64>,
    pub weight_sources: BTreeMap<String, WeightSource>,
    pub downweighted_modalities: Vec<Modality>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbiterConfig {
    /// Share of the signal side in the blend.
    pub lambda: f64,
    pub threshold: f64,
}

impl Default for ArbiterConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            threshold: crate::domain::DEFAULT_THRESHOLD,
        }
    }
}

/// Arbitration weight per answering expert: mean cluster-local F1 over the
/// usable modalities that rank it, else its stage-2 weight.
pub fn rule_weights(evidence: &EvidenceSet) -> (BTreeMap<String, f64>, BTreeMap<String, WeightSource>) {
    let usable: Vec<_> = evidence
        .cluster
        .iter()
        .flat_map(|c| c.entries.iter())
        .filter(|e| e.usable)
        .collect();
    let mut weights = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for e in evidence.experts.entries.iter().filter(|e| e.failure.is_none()) {
        let f1s: Vec<f64> = usable
            .iter()
            .filter_map(|c| c.local(&e.expert_id).map(|l| l.f1))
            .collect();
        let (w, src) = if f1s.is_empty() {
            (e.weight, WeightSource::Profile)
        } else {
            (f1s.iter().sum::<f64>() / f1s.len() as f64, WeightSource::ClusterLocal)
        };
        weights.insert(e.expert_id.clone(), w);
        sources.insert(e.expert_id.clone(), src);
    }
    (weights, sources)
}

/// Weighted mean of `scores`; zero total weight falls back to `fallback`
/// weights and then to equal weights.
pub fn weighted_signal(scores: &[f64], weights: &[f64], fallback: &[f64]) -> f64 {
    for w in [weights, fallback] {
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            return scores.iter().zip(w).map(|(s, w)| s * w).sum::<f64>() / total;
        }
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// `lambda * signal + (1 - lambda) * semantic`; signal alone without a
/// semantic verdict.
pub fn blend(signal: f64, semantic: Option<f64>, lambda: f64) -> f64 {
    match semantic {
        Some(q) => lambda * signal + (1.0 - lambda) * q,
        None => signal,
    }
    .clamp(0.0, 1.0)
}

/// Deterministic arbitration.
pub fn arbitrate_rule(evidence: &EvidenceSet, cfg: ArbiterConfig) -> ArbitrationRecord {
    let (weights, sources) = rule_weights(evidence);
    let answered: Vec<_> = evidence
        .experts
        .entries
        .iter()
        .filter(|e| e.failure.is_none())
        .collect();
    let scores: Vec<f64> = answered.iter().map(|e| e.calibrated_score.unwrap_or(0.5)).collect();
    let w: Vec<f64> = answered.iter().map(|e| weights[&e.expert_id]).collect();
    let fallback: Vec<f64> = answered.iter().map(|e| e.weight).collect();
    let signal_score = if scores.is_empty() {
        evidence.experts.aggregate_score
    } else {
        weighted_signal(&scores, &w, &fallback)
    };
    let semantic_score = evidence.semantic.as_ref().map(|s| s.verdict.fake_probability());
    let score = blend(signal_score, semantic_score, cfg.lambda);
    let verdict = Verdict::from_fake_probability(score, cfg.threshold, VerdictBasis::Arbitration);

    let mut rationale = Vec::new();
    if let Some(s) = &evidence.semantic {
        rationale.push(RationaleEntry {
            key: "semantic".into(),
            claim: format!(
                "semantic verdict {} at confidence {:.3} maps to fake probability {:.4}",
                s.verdict.label,
                s.verdict.confidence,
                s.verdict.fake_probability()
            ),
        });
    }
    rationale.push(RationaleEntry {
        key: "signal".into(),
        claim: format!("reliability-weighted signal score {signal_score:.4}"),
    });
    for e in &answered {
        let src = match sources[&e.expert_id] {
            WeightSource::ClusterLocal => "cluster-local F1",
            WeightSource::Profile => "profile weight",
        };
        rationale.push(RationaleEntry {
            key: format!("signal.expert.{}", e.expert_id),
            claim: format!(
                "calibrated {:.4} weighted {:.4} ({src})",
                e.calibrated_score.unwrap_or(0.5),
                weights[&e.expert_id]
            ),
        });
    }
    let mut downweighted = Vec::new();
    if let Some(c) = &evidence.cluster {
        for e in &c.entries {
            let claim = if e.usable {
                format!("cluster {} ranking used: {}", e.cluster_id, e.ranking.join(" > "))
            } else {
                downweighted.push(e.modality);
                format!(
                    "cluster {} down-weighted (silhouette {:.3})",
                    e.cluster_id, e.silhouette
                )
            };
            rationale.push(RationaleEntry {
                key: format!("cluster.{}", e.modality),
                claim,
            });
        }
    }
    ArbitrationRecord {
        verdict,
        mode: ArbiterMode::Rule,
        score,
        signal_score,
        semantic_score,
        rationale,
        weights_used: weights,
        weight_sources: sources,
        downweighted_modalities: downweighted,
    }
}

#[derive(Deserialize)]
struct LivePayload {
    verdict: String,
    confidence: f64,
    rationale: Vec<RationaleEntry>,
}

enum LiveProblem {
    Schema(String),
    Uncited(String),
}

impl LiveProblem {
    fn describe(&self) -> String {
        match self {
            LiveProblem::Schema(d) => d.clone(),
            LiveProblem::Uncited(k) => format!("rationale cites unknown evidence key {k:?}"),
        }
    }

    fn into_error(self) -> StageError {
        match self {
            LiveProblem::Schema(detail) => StageError::Schema {
                stage: Stage::Arbitration.as_str(),
                detail,
            },
            LiveProblem::Uncited(key) => StageError::DanglingCitation { key },
        }
    }
}

fn parse_live(
    text: &str,
    keys: &BTreeSet<String>,
) -> Result<(Verdict, Vec<RationaleEntry>), LiveProblem> {
    let schema = |d: String| LiveProblem::Schema(d);
    let block = extract_json_block(text).ok_or_else(|| schema("reply has no JSON block".into()))?;
    let p: LivePayload = serde_json::from_value(block).map_err(|e| schema(e.to_string()))?;
    let label: Label = p
        .verdict
        .parse()
        .map_err(|e: crate::Error| schema(e.to_string()))?;
    let verdict = Verdict::new(label, p.confidence, VerdictBasis::Arbitration)
        .map_err(|e| schema(e.to_string()))?;
    if p.rationale.is_empty() {
        return Err(schema("rationale is empty".into()));
    }
    if let Some(r) = p.rationale.iter().find(|r| !keys.contains(&r.key) || r.key == "arbitration") {
        return Err(LiveProblem::Uncited(r.key.clone()));
    }
    Ok((verdict, p.rationale))
}

/// Arbitration by a language model. Every rationale entry must cite an
/// evidence key; one repair retry is allowed.
pub fn arbitrate_live(
    evidence: &EvidenceSet,
    sample_id: &str,
    guideline: &Guideline,
    model: &dyn LanguageModel,
    cfg: ArbiterConfig,
) -> Result<ArbitrationRecord, StageError> {
    let rule = arbitrate_rule(evidence, cfg);
    let keys = evidence.keys();
    let mut snapshot = evidence.clone();
    snapshot.arbitration = None;
    let evidence_json = serde_json::to_string(&snapshot).unwrap_or_default();
    let key_list: Vec<&str> = keys.iter().map(String::as_str).filter(|k| *k != "arbitration").collect();
    let prompt = format!(
        "Image id: {sample_id}\nEvidence keys: {}\nEvidence: {evidence_json}\nResolve the conflict.",
        key_list.join(", ")
    );
    let mut req = ChatRequest {
        stage: Stage::Arbitration,
        sample_id,
        attempt: 0,
        system: &guideline.text,
        user: prompt.clone(),
        image_locator: None,
    };
    let first = model.complete(&req)?;
    let parsed = match parse_live(&first, &keys) {
        Ok(p) => p,
        Err(problem) => {
            req.attempt = 1;
            req.user = repair_prompt(&prompt, &problem.describe());
            let second = model.complete(&req)?;
            parse_live(&second, &keys).map_err(LiveProblem::into_error)?
        }
    };
    let (verdict, rationale) = parsed;
    Ok(ArbitrationRecord {
        score: verdict.fake_probability(),
        verdict,
        mode: ArbiterMode::Live,
        rationale,
        ..rule
    })
}
