use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::calibration::{build_expert_profile, ExpertProfile, LabeledScore};
use crate::clustering::ReliabilitySample;
use crate::codec::{read_json_file, write_canonical_file};
use crate::domain::{validate_identifier, Modality};
use crate::error::{Error, Result};
use crate::store::ProfileStore;

use super::adapters::{ExpertAdapter, HttpAdapter, ReplayAdapter, SubprocessAdapter};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

/// How the engine reaches an expert.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdapterSpec {
    HttpService { endpoint: String },
    /// Program and arguments of a long-lived line-JSON worker.
    Subprocess { command: Vec<String> },
    /// Line-delimited `{sample_id, expert_id, score}` records. Relative paths
    /// resolve against the panel file's directory.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertRegistration {
    pub expert_id: String,
    pub adapter: AdapterSpec,
    #[serde(default)]
    pub desc_text: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Assigned on registration; defines panel order and is never reused.
    #[serde(default)]
    pub registered_at: u64,
}

impl ExpertRegistration {
    pub fn new(expert_id: impl Into<String>, adapter: AdapterSpec, desc_text: impl Into<String>) -> Self {
        Self {
            expert_id: expert_id.into(),
            adapter,
            desc_text: desc_text.into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            registered_at: 0,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }
}

/// The semantic analyzer. It never takes part in conflict vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzerRegistration {
    pub analyzer_id: String,
    #[serde(default)]
    pub desc_text: String,
}

/// Registered signal experts in ordinal order, plus the semantic analyzer.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelConfig {
    pub experts: Vec<ExpertRegistration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_analyzer: Option<AnalyzerRegistration>,
    #[serde(default)]
    pub next_ordinal: u64,
}

impl PanelConfig {
    pub const FILE_NAME: &'static str = "panel.json";

    pub fn new() -> Self {
        Self::default()
    }

    pub fn signal_ids(&self) -> Vec<String> {
        self.experts.iter().map(|e| e.expert_id.clone()).collect()
    }

    pub fn get(&self, expert_id: &str) -> Option<&ExpertRegistration> {
        self.experts.iter().find(|e| e.expert_id == expert_id)
    }

    /// Appends `reg` at the next ordinal.
    pub fn add(&mut self, mut reg: ExpertRegistration) -> Result<&ExpertRegistration> {
        validate_identifier("expert id", &reg.expert_id)?;
        if self.get(&reg.expert_id).is_some() {
            return Err(Error::DuplicateId(reg.expert_id));
        }
        if self
            .semantic_analyzer
            .as_ref()
            .is_some_and(|a| a.analyzer_id == reg.expert_id)
        {
            return Err(Error::DuplicateId(reg.expert_id));
        }
        reg.registered_at = self.next_ordinal;
        self.next_ordinal += 1;
        self.experts.push(reg);
        Ok(self.experts.last().expect("just pushed"))
    }

    pub fn remove(&mut self, expert_id: &str) -> Result<ExpertRegistration> {
        let pos = self
            .experts
            .iter()
            .position(|e| e.expert_id == expert_id)
            .ok_or_else(|| Error::UnknownId(expert_id.to_string()))?;
        Ok(self.experts.remove(pos))
    }

    pub fn validate(&self) -> Result<()> {
        let mut last = None;
        for e in &self.experts {
            validate_identifier("expert id", &e.expert_id)?;
            if last.is_some_and(|l| e.registered_at <= l) {
                return Err(Error::Inconsistent(format!(
                    "panel ordinals are not increasing at expert {}",
                    e.expert_id
                )));
            }
            if e.registered_at >= self.next_ordinal {
                return Err(Error::Inconsistent(format!(
                    "expert {} has ordinal {} but next_ordinal is {}",
                    e.expert_id, e.registered_at, self.next_ordinal
                )));
            }
            last = Some(e.registered_at);
        }
        let ids = self.signal_ids();
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(a) = &self.semantic_analyzer {
            if ids.contains(&a.analyzer_id) {
                return Err(Error::Inconsistent(format!(
                    "{} is both a signal expert and the semantic analyzer",
                    a.analyzer_id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: PanelConfig = read_json_file(path)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_canonical_file(path, self)
    }
}

/// `FUSION_EXPERT_<ID>_ENDPOINT`, with the id upper-cased and every other
/// character mapped to `_`.
pub fn endpoint_override_var(expert_id: &str) -> String {
    let id: String = expert_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("FUSION_EXPERT_{id}_ENDPOINT")
}

/// The endpoint after applying the environment override, if set.
pub fn resolved_endpoint(expert_id: &str, configured: &str) -> String {
    std::env::var(endpoint_override_var(expert_id)).unwrap_or_else(|_| configured.to_string())
}

pub fn build_adapter(reg: &ExpertRegistration, base_dir: &Path) -> Result<Box<dyn ExpertAdapter>> {
    let id = reg.expert_id.clone();
    Ok(match &reg.adapter {
        AdapterSpec::HttpService { endpoint } => {
            let endpoint = resolved_endpoint(&id, endpoint);
            Box::new(HttpAdapter::new(id, endpoint, reg.timeout()))
        }
        AdapterSpec::Subprocess { command } => {
            if command.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "expert {id} has an empty subprocess command"
                )));
            }
            Box::new(SubprocessAdapter::new(id, command.clone(), reg.timeout()))
        }
        AdapterSpec::Replay { manifest } => {
            let path = if manifest.is_absolute() {
                manifest.clone()
            } else {
                base_dir.join(manifest)
            };
            Box::new(ReplayAdapter::from_manifest(&id, &path)?)
        }
    })
}

/// Adapters for the signal panel, in panel order.
pub fn build_adapters(panel: &PanelConfig, base_dir: &Path) -> Result<Vec<Box<dyn ExpertAdapter>>> {
    panel.experts.iter().map(|r| build_adapter(r, base_dir)).collect()
}

/// Labelled scores for building a new expert's profile.
#[derive(Debug, Clone, Copy)]
pub struct ProfileData<'a> {
    pub train: &'a [LabeledScore],
    pub val: &'a [LabeledScore],
    pub bins: usize,
}

/// Adds an expert to the store's panel and writes its profile. Without labels
/// the expert gets a template profile. Other experts' profiles are not
/// touched. When `rerank` carries validation bundles that include the new
/// expert's scores, the matching clustering profiles are re-ranked.
pub fn register_expert(
    store: &ProfileStore,
    reg: ExpertRegistration,
    data: Option<ProfileData<'_>>,
    rerank: Option<&BTreeMap<Modality, Vec<ReliabilitySample>>>,
) -> Result<PanelConfig> {
    let mut panel = store.load_panel_or_default()?;
    let desc = reg.desc_text.clone();
    let id = panel.add(reg)?.expert_id.clone();
    let profile = match data {
        Some(d) => build_expert_profile(&id, &desc, d.train, d.val, d.bins)?,
        None => ExpertProfile::template(&id, &desc),
    };
    let experts = panel.signal_ids();
    let mut reranked = Vec::new();
    if let Some(bundles) = rerank {
        for (modality, val) in bundles {
            if let Some(cp) = store.load_clustering_profile(*modality)? {
                reranked.push(cp.rerank(val, &experts)?);
            }
        }
    }
    // All fallible work is done; write the artifacts.
    store.save_expert_profile(&profile)?;
    for cp in &reranked {
        store.save_clustering_profile(cp)?;
    }
    store.save_panel(&panel)?;
    Ok(panel)
}

/// Drops an expert's registration and profile and removes it from every
/// clustering ranking.
pub fn remove_expert(store: &ProfileStore, expert_id: &str) -> Result<PanelConfig> {
    let mut panel = store.load_panel()?;
    panel.remove(expert_id)?;
    for modality in Modality::ALL {
        if let Some(cp) = store.load_clustering_profile(modality)? {
            if cp.expert_ids.iter().any(|e| e == expert_id) {
                store.save_clustering_profile(&cp.without_expert(expert_id))?;
            }
        }
    }
    store.remove_expert_profile(expert_id)?;
    store.save_panel(&panel)?;
    Ok(panel)
}
