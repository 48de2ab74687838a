use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{read_json_file, write_canonical_file};
use crate::domain::{FeatureVector, Modality, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};

use super::kmeans::{distinct_points, kmeans_best_of, select_k};
use super::model::{assign_cluster, ClusterModel, Standardizer};
use super::quality::{davies_bouldin, silhouette_score};
use super::reliability::{
    cluster_reliability, rank_experts, render_ranking_text, ClusterReliability, ReliabilitySample,
};

/// Silhouette below this marks a modality as poorly separated.
pub const LOW_SEPARABILITY: f64 = 0.1;

/// How K is chosen for a modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "k")]
pub enum KChoice {
    /// Elbow rule over K in [2, 20].
    Auto,
    Fixed(usize),
    /// The registry default of the modality.
    RegistryDefault,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringOptions {
    pub k: KChoice,
    pub seed: u64,
    pub restarts: usize,
    /// Score threshold used when computing local F1/accuracy.
    pub threshold: f64,
    /// Silhouette is computed on a seeded subsample above this many points.
    pub silhouette_max_points: usize,
    pub auto_k_range: (usize, usize),
}

impl Default for ClusteringOptions {
    fn default() -> Self {
        Self {
            k: KChoice::RegistryDefault,
            seed: 42,
            restarts: 4,
            threshold: DEFAULT_THRESHOLD,
            silhouette_max_points: 5000,
            auto_k_range: (2, 20),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub low_separability: bool,
    pub quality_text: String,
}

pub fn render_quality_text(modality: Modality, k: usize, silhouette: f64, db: f64) -> String {
    let sep = if silhouette < LOW_SEPARABILITY {
        "low separability"
    } else {
        "adequate separability"
    };
    format!("modality={modality}; K={k}; silhouette={silhouette:.4}; davies_bouldin={db:.4}; {sep}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub choice: KChoice,
    /// `(K, inertia)` pairs when K was chosen automatically.
    pub inertia_curve: Option<Vec<(usize, f64)>>,
}

/// Per-modality record: cluster model, per-cluster expert rankings and
/// clustering quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringProfile {
    pub modality: Modality,
    pub model: ClusterModel,
    pub k_selection: KSelection,
    pub expert_ids: Vec<String>,
    pub threshold: f64,
    pub reliabilities: Vec<ClusterReliability>,
    pub quality: ClusterQuality,
}

impl ClusteringProfile {
    pub fn file_name(modality: Modality) -> String {
        format!("clustering_profile_{modality}.json")
    }

    pub fn path_in(dir: &Path, modality: Modality) -> PathBuf {
        dir.join(Self::file_name(modality))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = Self::path_in(dir, self.modality);
        write_canonical_file(&path, self)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: ClusteringProfile = read_json_file(path)?;
        p.model.validate()?;
        if p.reliabilities.len() != p.model.k() {
            return Err(Error::Parse(format!(
                "{}: {} reliability entries for K={}",
                path.display(),
                p.reliabilities.len(),
                p.model.k()
            )));
        }
        Ok(p)
    }

    pub fn assign(&self, x: &FeatureVector) -> Result<usize> {
        assign_cluster(&self.model, x)
    }

    pub fn cluster(&self, id: usize) -> Option<&ClusterReliability> {
        self.reliabilities.get(id)
    }

    /// Recomputes rankings for a new expert set on the same cluster model.
    pub fn rerank(&self, val: &[ReliabilitySample], experts: &[String]) -> Result<Self> {
        let reliabilities = cluster_reliability(&self.model, val, experts, self.threshold)?;
        Ok(Self {
            expert_ids: experts.to_vec(),
            reliabilities,
            ..self.clone()
        })
    }

    /// Drops one expert from every ranking; the cluster model is untouched.
    pub fn without_expert(&self, expert_id: &str) -> Self {
        let mut out = self.clone();
        out.expert_ids.retain(|e| e != expert_id);
        for c in &mut out.reliabilities {
            c.per_expert.retain(|e| e.expert_id != expert_id);
            c.ranking = rank_experts(&c.per_expert);
            c.ranking_text = render_ranking_text(out.modality, c);
        }
        out
    }
}

fn choose_indices(n: usize, max: usize, seed: u64) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, max).into_vec();
    idx.sort_unstable();
    idx
}

/// Fits the modality's cluster model on `train`, then scores every expert per
/// cluster on `val`.
pub fn build_clustering_profile(
    modality: Modality,
    train: &[(String, FeatureVector)],
    val: &[ReliabilitySample],
    experts: &[String],
    opts: &ClusteringOptions,
) -> Result<ClusteringProfile> {
    if train.is_empty() {
        return Err(Error::EmptyInput("clustering training features"));
    }
    let train_ids: HashSet<&str> = train.iter().map(|(id, _)| id.as_str()).collect();
    if let Some(s) = val.iter().find(|s| train_ids.contains(s.sample_id.as_str())) {
        return Err(Error::OverlappingSplits(s.sample_id.clone()));
    }
    for (_, v) in train {
        if v.modality != modality {
            return Err(Error::InvalidArgument(format!(
                "{} features in the {modality} training set",
                v.modality
            )));
        }
    }
    let rows: Vec<&[f64]> = train.iter().map(|(_, v)| v.values()).collect();
    let standardizer = Standardizer::fit(&rows)?;
    let points: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.transform(r)).collect();

    let (k, curve) = match opts.k {
        KChoice::Fixed(k) => (k, None),
        KChoice::RegistryDefault => (modality.default_k(), None),
        KChoice::Auto => {
            let distinct = distinct_points(&points);
            let (lo, hi) = opts.auto_k_range;
            let lo = lo.max(2);
            let hi = hi.min(distinct.saturating_sub(1));
            if hi < lo {
                return Err(Error::NotEnoughDistinctPoints {
                    needed: lo + 1,
                    found: distinct,
                });
            }
            let mut curve = Vec::new();
            let mut best = f64::INFINITY;
            for k in (lo - 1)..=(hi + 1) {
                let fit = kmeans_best_of(&points, k, opts.seed, opts.restarts)?;
                // Local optima can make raw inertia rise with K; use the running minimum.
                best = best.min(fit.inertia());
                curve.push((k, best));
            }
            (select_k(&curve)?, Some(curve))
        }
    };
    if k < 2 {
        return Err(Error::InvalidArgument(
            "a clustering profile needs K >= 2".into(),
        ));
    }
    let fit = kmeans_best_of(&points, k, opts.seed, opts.restarts)?;
    let model = ClusterModel {
        modality,
        centroids: fit.centroids,
        standardizer,
        seed: opts.seed,
    };

    let idx = choose_indices(points.len(), opts.silhouette_max_points, opts.seed);
    let sub_points: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
    let sub_labels: Vec<usize> = idx.iter().map(|&i| fit.labels[i]).collect();
    let silhouette = silhouette_score(&sub_points, &sub_labels)?;
    let db = davies_bouldin(&points, &fit.labels)?;

    let reliabilities = cluster_reliability(&model, val, experts, opts.threshold)?;
    Ok(ClusteringProfile {
        modality,
        k_selection: KSelection {
            choice: opts.k,
            inertia_curve: curve,
        },
        expert_ids: experts.to_vec(),
        threshold: opts.threshold,
        reliabilities,
        quality: ClusterQuality {
            silhouette,
            davies_bouldin: db,
            low_separability: silhouette < LOW_SEPARABILITY,
            quality_text: render_quality_text(modality, model.k(), silhouette, db),
        },
        model,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::Rng;

    use super::*;
    use crate::domain::Label;

    fn blobs(n: usize, seed: u64, offset: usize) -> (Vec<(String, FeatureVector)>, Vec<ReliabilitySample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut val = Vec::new();
        for i in 0..n {
            let regime = i % 3;
            let (cx, cy) = [(0.0, 0.0), (8.0, 8.0), (16.0, 0.0)][regime];
            let v = vec![cx + rng.random_range(-1.0..1.0), cy + rng.random_range(-1.0..1.0)];
            let fv = FeatureVector::new(Modality::Srm, v).unwrap();
            let id = format!("s{}", i + offset);
            if i % 2 == 0 {
                train.push((id, fv));
            } else {
                let truth = if rng.random_bool(0.5) { Label::Fake } else { Label::Real };
                let right = if truth == Label::Fake { 0.9 } else { 0.1 };
                let wrong = 1.0 - right;
                let mut scores = BTreeMap::new();
                scores.insert("good_in_0".to_string(), if regime == 0 { right } else { wrong });
                scores.insert("good_elsewhere".to_string(), if regime == 0 { wrong } else { right });
                val.push(ReliabilitySample {
                    sample_id: id,
                    features: fv,
                    truth,
                    scores,
                });
            }
        }
        (train, val)
    }

    fn experts() -> Vec<String> {
        vec!["good_elsewhere".into(), "good_in_0".into()]
    }

    #[test]
    fn auto_k_finds_three_blobs_and_ranks_locally() {
        let (train, val) = blobs(600, 1, 0);
        let opts = ClusteringOptions {
            k: KChoice::Auto,
            auto_k_range: (2, 8),
            ..Default::default()
        };
        let p = build_clustering_profile(Modality::Srm, &train, &val, &experts(), &opts).unwrap();
        assert_eq!(p.model.k(), 3);
        assert!(p.quality.silhouette > 0.5);
        assert!(!p.quality.low_separability);
        let zero_cluster = p
            .assign(&FeatureVector::new(Modality::Srm, vec![0.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(p.reliabilities[zero_cluster].ranking[0], "good_in_0");
        let far = p
            .assign(&FeatureVector::new(Modality::Srm, vec![16.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(p.reliabilities[far].ranking[0], "good_elsewhere");
    }

    #[test]
    fn fit_labels_replay_through_assignment() {
        let (train, val) = blobs(200, 2, 0);
        let opts = ClusteringOptions {
            k: KChoice::Fixed(4),
            ..Default::default()
        };
        let p = build_clustering_profile(Modality::Srm, &train, &val, &experts(), &opts).unwrap();
        let rows: Vec<&[f64]> = train.iter().map(|(_, v)| v.values()).collect();
        let pts: Vec<Vec<f64>> = rows.iter().map(|r| p.model.standardizer.transform(r)).collect();
        let fit = kmeans_best_of(&pts, 4, opts.seed, opts.restarts).unwrap();
        for ((_, v), l) in train.iter().zip(&fit.labels) {
            assert_eq!(p.assign(v).unwrap(), *l);
        }
    }

    #[test]
    fn round_trip_and_removal() {
        let dir = tempfile::tempdir().unwrap();
        let (train, val) = blobs(120, 3, 0);
        let opts = ClusteringOptions {
            k: KChoice::Fixed(3),
            ..Default::default()
        };
        let p = build_clustering_profile(Modality::Srm, &train, &val, &experts(), &opts).unwrap();
        let path = p.save(dir.path()).unwrap();
        assert!(path.ends_with("clustering_profile_srm.json"));
        assert_eq!(ClusteringProfile::load(&path).unwrap(), p);

        let q = p.without_expert("good_in_0");
        for c in &q.reliabilities {
            if c.usable {
                assert_eq!(c.ranking, vec!["good_elsewhere"]);
            }
            assert!(!c.ranking_text.contains("good_in_0"));
        }
        assert_eq!(q.model, p.model);
    }

    #[test]
    fn low_separability_flag_in_text() {
        let t = render_quality_text(Modality::Clip, 12, 0.05, 3.0);
        assert!(t.contains("low separability"));
        let t = render_quality_text(Modality::Clip, 12, 0.3, 1.0);
        assert!(!t.contains("low separability"));
    }

    #[test]
    fn overlapping_ids_rejected() {
        let (train, mut val) = blobs(40, 4, 0);
        val[0].sample_id = train[0].0.clone();
        let r = build_clustering_profile(
            Modality::Srm,
            &train,
            &val,
            &experts(),
            &ClusteringOptions {
                k: KChoice::Fixed(2),
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::OverlappingSplits(_))));
    }
}
