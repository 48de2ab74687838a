//! Synthetic expert panels with known accuracy and miscalibration.
//!
//! Every sample belongs to a hidden context. Its features in each modality
//! come from a Gaussian around the centroid of cluster `context % clusters`,
//! and each expert answers correctly with the probability its accuracy row
//! gives for that context. A correct fake-class score is `1 - d` for fakes
//! and `d` for reals with `d ~ 0.2 * Beta(2, 5)`; a wrong score is mirrored.
//! The distortion `p -> p^gamma` is applied last. Calls survive distortion
//! for `gamma` in roughly [0.43, 3.1].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::{render_semantic_reply, write_transcript, ScriptedReply, Stage};
use crate::codec::{read_json_file, write_canonical_file, write_jsonl};
use crate::domain::io::{write_features, write_manifest, FeatureTable};
use crate::domain::{
    hash_content, DatasetManifest, FeatureVector, Label, Modality, Sample, Split, Verdict,
    VerdictBasis,
};
use crate::error::{Error, Result};
use crate::experts::{AdapterSpec, ExpertRegistration, PanelConfig, ReplayRecord};

/// Largest distance of a correct score from its label.
pub const SCORE_SPREAD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimExpert {
    pub expert_id: String,
    /// Miscalibration exponent applied to the fake-class score.
    #[serde(default = "one")]
    pub gamma: f64,
    /// Probability of a correct call, one entry per context.
    pub accuracy: Vec<f64>,
    #[serde(default)]
    pub desc_text: String,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimModality {
    pub modality: Modality,
    pub clusters: usize,
    pub dim: usize,
    /// Smallest distance between cluster centroids, in noise standard
    /// deviations.
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_separation() -> f64 {
    8.0
}

/// A calibrated semantic analyzer: confidence `c ~ U[lo, hi]`, correct with
/// probability `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSemantic {
    pub confidence_lo: f64,
    pub confidence_hi: f64,
}

impl Default for SimSemantic {
    fn default() -> Self {
        Self {
            confidence_lo: 0.5,
            confidence_hi: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub experts: Vec<SimExpert>,
    pub contexts: usize,
    /// Context prior; uniform when absent.
    #[serde(default)]
    pub context_weights: Option<Vec<f64>>,
    pub modalities: Vec<SimModality>,
    /// Probability that a sample is fake.
    #[serde(default = "half")]
    pub fake_fraction: f64,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub semantic: SimSemantic,
    /// Source datasets, assigned uniformly.
    #[serde(default = "default_datasets")]
    pub datasets: Vec<String>,
    /// Sample id prefix.
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn half() -> f64 {
    0.5
}

fn default_datasets() -> Vec<String> {
    vec!["sim".into()]
}

fn default_prefix() -> String {
    "sim".into()
}

fn bad(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

impl PanelSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let s: PanelSpec = read_json_file(path)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(bad("sample count must be at least 1".into()));
        }
        if self.contexts == 0 {
            return Err(bad("spec needs at least one context".into()));
        }
        if self.experts.is_empty() {
            return Err(bad("spec needs at least one expert".into()));
        }
        if self.datasets.is_empty() {
            return Err(bad("spec needs at least one dataset".into()));
        }
        if !(0.0..=1.0).contains(&self.fake_fraction) {
            return Err(bad(format!("fake fraction {} outside [0, 1]", self.fake_fraction)));
        }
        for e in &self.experts {
            crate::domain::validate_identifier("expert id", &e.expert_id)?;
            if !(e.gamma.is_finite() && e.gamma > 0.0) {
                return Err(bad(format!("expert {} has gamma {} <= 0", e.expert_id, e.gamma)));
            }
            if e.accuracy.len() != self.contexts {
                return Err(bad(format!(
                    "expert {} has {} accuracies for {} contexts",
                    e.expert_id,
                    e.accuracy.len(),
                    self.contexts
                )));
            }
            if let Some(a) = e.accuracy.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(bad(format!("expert {} has accuracy {a} outside [0, 1]", e.expert_id)));
            }
        }
        let mut ids: Vec<&str> = self.experts.iter().map(|e| e.expert_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0].to_string()));
        }
        if let Some(w) = &self.context_weights {
            if w.len() != self.contexts
                || w.iter().any(|x| !(x.is_finite() && *x >= 0.0))
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(bad("context weights must be one non-negative weight per context with a positive sum".into()));
            }
        }
        for m in &self.modalities {
            if m.clusters == 0 || m.dim == 0 {
                return Err(bad(format!("modality {} needs clusters and dim >= 1", m.modality)));
            }
            if m.clusters > m.dim + 1 {
                return Err(bad(format!(
                    "modality {} cannot place {} separated clusters in {} dimensions",
                    m.modality, m.clusters, m.dim
                )));
            }
        }
        let mut mods: Vec<Modality> = self.modalities.iter().map(|m| m.modality).collect();
        mods.sort();
        if mods.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("modality listed twice".into()));
        }
        let s = self.semantic;
        if !(0.0 <= s.confidence_lo && s.confidence_lo <= s.confidence_hi && s.confidence_hi <= 1.0) {
            return Err(bad("semantic confidence range must satisfy 0 <= lo <= hi <= 1".into()));
        }
        Ok(())
    }

    pub fn expert_ids(&self) -> Vec<String> {
        self.experts.iter().map(|e| e.expert_id.clone()).collect()
    }
}

/// Ground truth for one generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub id: String,
    pub context: usize,
    /// Cluster per modality.
    pub clusters: BTreeMap<Modality, usize>,
    /// Whether each expert's call was drawn correct, in spec order.
    pub correct: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub manifest: DatasetManifest,
    pub features: FeatureTable,
    /// Raw fake-class scores per expert, aligned with the manifest.
    pub scores: BTreeMap<String, Vec<f64>>,
    /// Semantic verdicts, aligned with the manifest.
    pub semantic: Vec<Verdict>,
    pub truth: Vec<SimTruth>,
}

/// Files written by [`write_panel`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelFiles {
    pub manifest: PathBuf,
    pub features: PathBuf,
    pub scores: BTreeMap<String, PathBuf>,
    pub semantic: PathBuf,
    pub truth: PathBuf,
    pub panel: PathBuf,
}

fn sign(cluster: usize, d: usize) -> f64 {
    if (cluster & (d + 1)).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Walsh sign patterns scaled so the closest pair of centroids is
/// `separation` apart. Every pair differs in at least one coordinate as long
/// as `clusters <= dim + 1`.
fn centroids(clusters: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut min_diff = dim;
    for a in 0..clusters {
        for b in a + 1..clusters {
            let h = (0..dim).filter(|d| sign(a, *d) != sign(b, *d)).count();
            min_diff = min_diff.min(h);
        }
    }
    let scale = separation / (2.0 * (min_diff.max(1) as f64).sqrt());
    (0..clusters)
        .map(|c| (0..dim).map(|d| scale * sign(c, d)).collect())
        .collect()
}

fn pick(rng: &mut ChaCha8Rng, weights: Option<&[f64]>, n: usize) -> usize {
    match weights {
        None => rng.random_range(0..n),
        Some(w) => {
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (i, x) in w.iter().enumerate() {
                if u < *x {
                    return i;
                }
                u -= x;
            }
            w.iter().rposition(|x| *x > 0.0).unwrap_or(n - 1)
        }
    }
}

/// Generates the panel. Sample `i` draws from its own ChaCha8 stream, so
/// output is a pure function of the `PanelSpec`.
pub fn generate_panel(spec: &PanelSpec) -> Result<SimulatedPanel> {
    spec.validate()?;
    let beta = Beta::new(2.0, 5.0).expect("valid beta parameters");
    let noise = Normal::new(0.0, 1.0).expect("valid normal parameters");
    let centroids: Vec<Vec<Vec<f64>>> = spec
        .modalities
        .iter()
        .map(|m| centroids(m.clusters, m.dim, m.separation))
        .collect();
    let width = (spec.samples.max(1) - 1).to_string().len();

    let mut samples = Vec::with_capacity(spec.samples);
    let mut features = FeatureTable::new();
    let mut scores: BTreeMap<String, Vec<f64>> =
        spec.experts.iter().map(|e| (e.expert_id.clone(), Vec::with_capacity(spec.samples))).collect();
    let mut semantic = Vec::with_capacity(spec.samples);
    let mut truth = Vec::with_capacity(spec.samples);

    for i in 0..spec.samples {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let id = format!("{}-{i:0width$}", spec.id_prefix);
        let dataset = spec.datasets[rng.random_range(0..spec.datasets.len())].clone();
        let gt = if rng.random_bool(spec.fake_fraction) {
            Label::Fake
        } else {
            Label::Real
        };
        let context = pick(&mut rng, spec.context_weights.as_deref(), spec.contexts);

        let mut clusters = BTreeMap::new();
        for (m, cents) in spec.modalities.iter().zip(&centroids) {
            let c = context % m.clusters;
            let values: Vec<f64> = cents[c].iter().map(|x| x + noise.sample(&mut rng)).collect();
            features.insert(id.clone(), FeatureVector::new(m.modality, values)?);
            clusters.insert(m.modality, c);
        }

        let mut correct = Vec::with_capacity(spec.experts.len());
        for e in &spec.experts {
            let ok = rng.random_bool(e.accuracy[context]);
            let d = SCORE_SPREAD * beta.sample(&mut rng);
            let called = if ok { gt } else { gt.flip() };
            let p = match called {
                Label::Fake => 1.0 - d,
                Label::Real => d,
            };
            scores
                .get_mut(&e.expert_id)
                .expect("expert initialised")
                .push(p.powf(e.gamma));
            correct.push(ok);
        }

        let s = spec.semantic;
        let conf = s.confidence_lo + (s.confidence_hi - s.confidence_lo) * rng.random::<f64>();
        let label = if rng.random_bool(conf) { gt } else { gt.flip() };
        semantic.push(Verdict::new(label, conf, VerdictBasis::Semantic)?);

        let mut hash_input = spec.seed.to_le_bytes().to_vec();
        hash_input.extend_from_slice(id.as_bytes());
        samples.push(Sample {
            id: id.clone(),
            source_dataset: dataset,
            ground_truth: gt,
            content_hash: hash_content(&hash_input),
            feature_refs: BTreeMap::new(),
            image_locator: None,
        });
        truth.push(SimTruth {
            id,
            context,
            clusters,
            correct,
        });
    }
    Ok(SimulatedPanel {
        manifest: DatasetManifest::new(spec.id_prefix.clone(), Split::Test, samples)?,
        features,
        scores,
        semantic,
        truth,
    })
}

impl SimulatedPanel {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.manifest.samples().iter().position(|s| s.id == id)
    }

    /// Scores of one expert keyed by sample id.
    pub fn score_map(&self, expert_id: &str) -> Option<std::collections::HashMap<String, f64>> {
        let scores = self.scores.get(expert_id)?;
        Some(
            self.manifest
                .samples()
                .iter()
                .zip(scores)
                .map(|(s, p)| (s.id.clone(), *p))
                .collect(),
        )
    }

    /// Scripted semantic replies for every sample.
    pub fn semantic_transcript(&self) -> Vec<ScriptedReply> {
        self.manifest
            .samples()
            .iter()
            .zip(&self.semantic)
            .map(|(s, v)| ScriptedReply {
                stage: Stage::Semantic,
                sample_id: s.id.clone(),
                attempt: 0,
                reply: render_semantic_reply(v.label, v.confidence, &[]),
            })
            .collect()
    }

    /// Consecutive train/val/test manifests; samples are i.i.d. so order
    /// splitting is unbiased.
    pub fn split(&self, train: usize, val: usize) -> Result<(DatasetManifest, DatasetManifest, DatasetManifest)> {
        let all = self.manifest.samples();
        if train + val > all.len() {
            return Err(bad(format!(
                "cannot take {train} train and {val} val samples from {}",
                all.len()
            )));
        }
        let name = &self.manifest.name;
        Ok((
            DatasetManifest::new(format!("{name}-train"), Split::Train, all[..train].to_vec())?,
            DatasetManifest::new(format!("{name}-val"), Split::Val, all[train..train + val].to_vec())?,
            DatasetManifest::new(format!("{name}-test"), Split::Test, all[train + val..].to_vec())?,
        ))
    }
}

/// Writes the manifest, feature sidecar, one replay score file per expert, the
/// scripted semantic transcript, the ground-truth contexts and a panel config
/// whose experts replay the score files.
pub fn write_panel(dir: &Path, spec: &PanelSpec, panel: &SimulatedPanel) -> Result<PanelFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = PanelFiles {
        manifest: dir.join("manifest.jsonl"),
        features: dir.join("features.jsonl"),
        scores: spec
            .experts
            .iter()
            .map(|e| (e.expert_id.clone(), dir.join(format!("scores-{}.jsonl", e.expert_id))))
            .collect(),
        semantic: dir.join("semantic.jsonl"),
        truth: dir.join("truth.jsonl"),
        panel: dir.join(PanelConfig::FILE_NAME),
    };
    write_manifest(&files.manifest, &panel.manifest)?;
    write_features(&files.features, &panel.features)?;
    let mut config = PanelConfig::new();
    for e in &spec.experts {
        let records: Vec<ReplayRecord> = panel
            .manifest
            .samples()
            .iter()
            .zip(&panel.scores[&e.expert_id])
            .map(|(s, p)| ReplayRecord {
                sample_id: s.id.clone(),
                expert_id: e.expert_id.clone(),
                score: *p,
            })
            .collect();
        let path = &files.scores[&e.expert_id];
        write_jsonl(path, None, &records)?;
        let manifest = PathBuf::from(path.file_name().expect("file name"));
        config.add(ExpertRegistration::new(
            e.expert_id.clone(),
            AdapterSpec::Replay { manifest },
            e.desc_text.clone(),
        ))?;
    }
    write_transcript(&files.semantic, &panel.semantic_transcript())?;
    write_jsonl(&files.truth, None, &panel.truth)?;
    write_canonical_file(&files.panel, &config)?;
    Ok(files)
}
