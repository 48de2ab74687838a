use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusteringProfile, ExpertLocal};
use crate::domain::{FeatureVector, Modality};

use super::client::{ChatRequest, LanguageModel, Stage};
use super::guideline::Guideline;

/// What one modality's clustering profile says about the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub modality: Modality,
    pub cluster_id: usize,
    /// False when the modality separates poorly or the cluster had no
    /// validation support.
    pub usable: bool,
    pub ranking: Vec<String>,
    pub ranking_text: String,
    pub local: Vec<ExpertLocal>,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub quality_text: String,
}

impl ClusterEntry {
    pub fn local(&self, expert_id: &str) -> Option<&ExpertLocal> {
        self.local.iter().find(|l| l.expert_id == expert_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// In modality order clip < srm < cfa.
    pub entries: Vec<ClusterEntry>,
    /// Why modalities were skipped, if any were.
    pub notes: Vec<String>,
    pub narrative: String,
}

impl ClusterReport {
    pub fn entry(&self, modality: Modality) -> Option<&ClusterEntry> {
        self.entries.iter().find(|e| e.modality == modality)
    }

    pub fn downweighted(&self) -> Vec<Modality> {
        self.entries.iter().filter(|e| !e.usable).map(|e| e.modality).collect()
    }

    fn skipped(note: impl Into<String>) -> Self {
        let note = note.into();
        Self {
            entries: Vec::new(),
            narrative: format!("Cluster stage skipped: {note}."),
            notes: vec![note],
        }
    }
}

pub fn cluster_template(r: &ClusterReport) -> String {
    if r.entries.is_empty() {
        return format!("No cluster evidence: {}.", r.notes.join("; "));
    }
    let parts: Vec<String> = r
        .entries
        .iter()
        .map(|e| {
            let top = e.ranking.first().map(String::as_str).unwrap_or("none");
            let state = if e.usable { "usable" } else { "down-weighted" };
            format!(
                "{} cluster {} ({state}, silhouette {:.3}): top expert {top}",
                e.modality, e.cluster_id, e.silhouette
            )
        })
        .collect();
    format!("{}.", parts.join("; "))
}

/// Stage 3: places the sample in each modality's clusters and pulls the local
/// rankings. `profiles` is `None` when clustering profiles are disabled.
pub fn stage3_cluster(
    sample_id: &str,
    features: &BTreeMap<Modality, FeatureVector>,
    profiles: Option<&BTreeMap<Modality, ClusteringProfile>>,
    silhouette_threshold: f64,
    guideline: &Guideline,
    narrator: Option<&dyn LanguageModel>,
) -> ClusterReport {
    let Some(profiles) = profiles else {
        return ClusterReport::skipped("clustering profiles disabled");
    };
    if features.is_empty() {
        return ClusterReport::skipped("sample has no feature vectors");
    }
    let mut entries = Vec::new();
    let mut notes = Vec::new();
    for modality in Modality::ALL {
        let (Some(x), Some(p)) = (features.get(&modality), profiles.get(&modality)) else {
            if features.contains_key(&modality) {
                notes.push(format!("no clustering profile for {modality}"));
            }
            continue;
        };
        let c = match p.assign(x) {
            Ok(c) => c,
            Err(e) => {
                notes.push(format!("{modality} assignment failed: {e}"));
                continue;
            }
        };
        let rel = p.cluster(c).expect("assignment within K");
        let silhouette = p.quality.silhouette;
        entries.push(ClusterEntry {
            modality,
            cluster_id: c,
            usable: rel.usable && silhouette >= silhouette_threshold,
            ranking: rel.ranking.clone(),
            ranking_text: rel.ranking_text.clone(),
            local: rel.per_expert.clone(),
            silhouette,
            davies_bouldin: p.quality.davies_bouldin,
            quality_text: p.quality.quality_text.clone(),
        });
    }
    if entries.is_empty() && notes.is_empty() {
        notes.push("no modality has both features and a clustering profile".into());
    }
    let mut report = ClusterReport {
        entries,
        notes,
        narrative: String::new(),
    };
    report.narrative = cluster_template(&report);
    if let (Some(model), false) = (narrator, report.entries.is_empty()) {
        let texts: Vec<String> = report
            .entries
            .iter()
            .map(|e| format!("{}\n{}", e.ranking_text, e.quality_text))
            .collect();
        let req = ChatRequest {
            stage: Stage::Cluster,
            sample_id,
            attempt: 0,
            system: &guideline.text,
            user: format!(
                "Image id: {sample_id}\nCluster evidence:\n{}\nSummarise the data-centric reliability evidence.",
                texts.join("\n")
            ),
            image_locator: None,
        };
        if let Ok(text) = model.complete(&req) {
            report.narrative = text;
        }
    }
    report
}
