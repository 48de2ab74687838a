use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::arbitrate::ArbitrationRecord;
use super::cluster::ClusterReport;
use super::semantic::SemanticReport;
use super::signal::SignalReport;

/// Everything the stages produced for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSet {
    /// Absent when the semantic stage failed; the run is then signal-only.
    pub semantic: Option<SemanticReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_failure: Option<String>,
    pub experts: SignalReport,
    pub cluster: Option<ClusterReport>,
    pub arbitration: Option<ArbitrationRecord>,
}

/// The semantic and signal stages reach different labels.
pub fn detect_conflict(semantic: &SemanticReport, signal: &SignalReport) -> bool {
    semantic.verdict.label != signal.verdict.label
}

impl EvidenceSet {
    pub fn conflict(&self) -> bool {
        self.semantic
            .as_ref()
            .is_some_and(|s| detect_conflict(s, &self.experts))
    }

    /// Keys that rationale entries and provenance may cite.
    pub fn keys(&self) -> BTreeSet<String> {
        let mut keys = BTreeSet::new();
        if let Some(s) = &self.semantic {
            keys.insert("semantic".to_string());
            for i in 0..s.anomalies.len() {
                keys.insert(format!("semantic.anomaly.{i}"));
            }
        }
        keys.insert("signal".to_string());
        for e in &self.experts.entries {
            keys.insert(format!("signal.expert.{}", e.expert_id));
        }
        if let Some(c) = &self.cluster {
            keys.insert("cluster".to_string());
            for e in &c.entries {
                keys.insert(format!("cluster.{}", e.modality));
            }
        }
        if self.arbitration.is_some() {
            keys.insert("arbitration".to_string());
        }
        keys
    }

    /// Rationale keys that do not resolve against this set.
    pub fn dangling_citations(&self) -> Vec<String> {
        let keys = self.keys();
        self.arbitration
            .iter()
            .flat_map(|a| a.rationale.iter())
            .filter(|r| !keys.contains(&r.key))
            .map(|r| r.key.clone())
            .collect()
    }

    /// Cluster and arbitration evidence are present together, exactly when
    /// the stages conflict, and every citation resolves.
    pub fn check(&self) -> Result<()> {
        let conflict = self.conflict();
        if self.cluster.is_some() != conflict || self.arbitration.is_some() != conflict {
            return Err(Error::Inconsistent(format!(
                "conflict={conflict} but cluster present={} and arbitration present={}",
                self.cluster.is_some(),
                self.arbitration.is_some()
            )));
        }
        if let Some(k) = self.dangling_citations().into_iter().next() {
            return Err(Error::Inconsistent(format!("dangling citation {k}")));
        }
        Ok(())
    }
}
