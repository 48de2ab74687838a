//! One-time profiling: expert profiles from labelled scores and clustering
//! profiles from feature sidecars, for a whole panel.

use std::collections::{BTreeMap, HashMap};

use crate::calibration::{build_expert_profile, ExpertProfile, LabeledScore, DEFAULT_ECE_BINS};
use crate::clustering::{
    build_clustering_profile, ClusteringOptions, ClusteringProfile, ReliabilitySample,
};
use crate::domain::io::FeatureTable;
use crate::domain::{DatasetManifest, Modality, Sample};
use crate::error::{Error, Result};
use crate::experts::{ExpertAdapter, PanelConfig};
use crate::store::ProfileStore;

/// Raw scores per expert, keyed by sample id.
pub type ScoreTable = BTreeMap<String, HashMap<String, f64>>;

/// Scores every sample with every adapter. A failed call is an error naming
/// the expert and sample.
pub fn collect_scores(adapters: &[Box<dyn ExpertAdapter>], samples: &[Sample]) -> Result<ScoreTable> {
    let mut table = ScoreTable::new();
    for a in adapters {
        let mut m = HashMap::with_capacity(samples.len());
        for s in samples {
            let p = a.score(s).map_err(|e| {
                Error::InvalidArgument(format!("expert {} on sample {}: {e}", a.expert_id(), s.id))
            })?;
            m.insert(s.id.clone(), p);
        }
        table.insert(a.expert_id().to_string(), m);
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBuildOptions {
    pub bins: usize,
    pub clustering: ClusteringOptions,
    pub expert_profiles: bool,
    pub clustering_profiles: bool,
    /// Rank experts inside clusters by calibrated rather than raw scores.
    /// Only applies when expert profiles are built.
    pub calibrated_rankings: bool,
}

impl Default for ProfileBuildOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_ECE_BINS,
            clustering: ClusteringOptions::default(),
            expert_profiles: true,
            clustering_profiles: true,
            calibrated_rankings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BuiltProfiles {
    pub expert_profiles: BTreeMap<String, ExpertProfile>,
    pub clustering_profiles: BTreeMap<Modality, ClusteringProfile>,
}

fn score_of(scores: &ScoreTable, expert: &str, id: &str) -> Result<f64> {
    scores
        .get(expert)
        .ok_or_else(|| Error::UnknownId(format!("no scores for expert {expert}")))?
        .get(id)
        .copied()
        .ok_or_else(|| Error::UnknownId(format!("expert {expert} has no score for sample {id}")))
}

fn labeled(scores: &ScoreTable, expert: &str, m: &DatasetManifest) -> Result<Vec<LabeledScore>> {
    m.samples()
        .iter()
        .map(|s| Ok(LabeledScore::new(s.id.clone(), score_of(scores, expert, &s.id)?, s.ground_truth)))
        .collect()
}

/// Builds profiles for every panel expert and every modality that has
/// training features. Clustering is trained on `train` features and ranks
/// experts on `val`.
pub fn build_profiles(
    panel: &PanelConfig,
    train: &DatasetManifest,
    val: &DatasetManifest,
    scores: &ScoreTable,
    features: &FeatureTable,
    opts: &ProfileBuildOptions,
) -> Result<BuiltProfiles> {
    let ids = panel.signal_ids();
    if ids.is_empty() {
        return Err(Error::EmptyInput("signal panel"));
    }
    let mut out = BuiltProfiles::default();
    if opts.expert_profiles {
        for reg in &panel.experts {
            let t = labeled(scores, &reg.expert_id, train)?;
            let v = labeled(scores, &reg.expert_id, val)?;
            let p = build_expert_profile(&reg.expert_id, &reg.desc_text, &t, &v, opts.bins)?;
            out.expert_profiles.insert(reg.expert_id.clone(), p);
        }
    }
    if !opts.clustering_profiles {
        return Ok(out);
    }
    let calibrate = opts.expert_profiles && opts.calibrated_rankings;
    for modality in Modality::ALL {
        let train_x: Vec<(String, _)> = train
            .samples()
            .iter()
            .filter_map(|s| features.get(&s.id, modality).map(|v| (s.id.clone(), v.clone())))
            .collect();
        if train_x.is_empty() {
            continue;
        }
        let mut val_x = Vec::new();
        for s in val.samples() {
            let Some(v) = features.get(&s.id, modality) else {
                continue;
            };
            let mut per_expert = BTreeMap::new();
            for id in &ids {
                let raw = score_of(scores, id, &s.id)?;
                let p = match out.expert_profiles.get(id).filter(|_| calibrate) {
                    Some(prof) => prof.calibrate(raw)?,
                    None => raw,
                };
                per_expert.insert(id.clone(), p);
            }
            val_x.push(ReliabilitySample {
                sample_id: s.id.clone(),
                features: v.clone(),
                truth: s.ground_truth,
                scores: per_expert,
            });
        }
        let cp = build_clustering_profile(modality, &train_x, &val_x, &ids, &opts.clustering)?;
        out.clustering_profiles.insert(modality, cp);
    }
    Ok(out)
}

/// Writes the panel and every built profile into `store`.
pub fn write_profiles(store: &ProfileStore, panel: &PanelConfig, built: &BuiltProfiles) -> Result<()> {
    std::fs::create_dir_all(store.dir()).map_err(|e| Error::io(store.dir(), e))?;
    store.save_panel(panel)?;
    for p in built.expert_profiles.values() {
        store.save_expert_profile(p)?;
    }
    for cp in built.clustering_profiles.values() {
        store.save_clustering_profile(cp)?;
    }
    Ok(())
}
