//! Shared domain types: samples, labels, feature vectors, verdicts and
//! dataset manifests.
//!
//! The positive class is always [`Label::Fake`]. A probability is read as the
//! probability that the image is AI-generated.

mod hash;
pub mod io;
mod metrics;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_probability, Error, Result};

pub use hash::{hash_content, hash_file, ContentHash};
pub use metrics::{f1_acc, ConfusionCounts, F1Acc, Prediction};

/// Decision threshold used everywhere a probability is turned into a label.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Ground truth or predicted label. Serialized as `0` (real) or `1` (fake).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// `score >= threshold` is fake.
    pub fn from_score(score: f64, threshold: f64) -> Self {
        if score >= threshold {
            Label::Fake
        } else {
            Label::Real
        }
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            other => Err(Error::InvalidArgument(format!(
                "label must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.bit())
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Real => Label::Fake,
            Label::Fake => Label::Real,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" | "0" => Ok(Label::Real),
            "fake" | "1" => Ok(Label::Fake),
            other => Err(Error::Parse(format!("unknown label {other:?}"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.bit())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let bit = u8::deserialize(deserializer)?;
        Label::from_bit(bit).map_err(serde::de::Error::custom)
    }
}

/// Feature modality. The derived order (clip < srm < cfa) is the canonical
/// order used in reports.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Clip,
    Srm,
    Cfa,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Clip, Modality::Srm, Modality::Cfa];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Clip => "clip",
            Modality::Srm => "srm",
            Modality::Cfa => "cfa",
        }
    }

    /// Registry default feature dimension.
    pub fn default_dim(self) -> usize {
        match self {
            Modality::Clip => 768,
            Modality::Srm => 34,
            Modality::Cfa => 64,
        }
    }

    /// Registry default cluster count.
    pub fn default_k(self) -> usize {
        match self {
            Modality::Clip => 12,
            Modality::Srm => 8,
            Modality::Cfa => 10,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clip" => Ok(Modality::Clip),
            "srm" => Ok(Modality::Srm),
            "cfa" => Ok(Modality::Cfa),
            other => Err(Error::Parse(format!("unknown modality {other:?}"))),
        }
    }
}

/// Expected feature dimension per modality. Defaults follow the reference
/// extractors; alternates may override any entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRegistry {
    dims: BTreeMap<Modality, usize>,
}

impl Default for FeatureRegistry {
    fn default() -> Self {
        Self {
            dims: Modality::ALL.iter().map(|m| (*m, m.default_dim())).collect(),
        }
    }
}

impl FeatureRegistry {
    pub fn with_dim(mut self, modality: Modality, dim: usize) -> Self {
        self.dims.insert(modality, dim);
        self
    }

    pub fn dim(&self, modality: Modality) -> usize {
        self.dims
            .get(&modality)
            .copied()
            .unwrap_or_else(|| modality.default_dim())
    }

    pub fn check(&self, v: &FeatureVector) -> Result<()> {
        let expected = self.dim(v.modality);
        if v.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: v.dim(),
            });
        }
        Ok(())
    }
}

/// A feature vector of one modality. Values are finite and non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFeatureVector")]
pub struct FeatureVector {
    pub modality: Modality,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawFeatureVector {
    modality: Modality,
    values: Vec<f64>,
}

impl TryFrom<RawFeatureVector> for FeatureVector {
    type Error = Error;

    fn try_from(raw: RawFeatureVector) -> Result<Self> {
        FeatureVector::new(raw.modality, raw.values)
    }
}

impl FeatureVector {
    pub fn new(modality: Modality, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("feature vector"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite feature value {bad} in {modality} vector"
            )));
        }
        Ok(Self { modality, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// One image in a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub source_dataset: String,
    pub ground_truth: Label,
    pub content_hash: ContentHash,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub feature_refs: BTreeMap<Modality, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_locator: Option<String>,
}

/// Raw and (optionally) calibrated score from one expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub expert_id: String,
    pub raw_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_score: Option<f64>,
}

impl ScoreRecord {
    pub fn new(
        expert_id: impl Into<String>,
        raw_score: f64,
        calibrated_score: Option<f64>,
    ) -> Result<Self> {
        check_probability("raw score", raw_score)?;
        if let Some(c) = calibrated_score {
            check_probability("calibrated score", c)?;
        }
        Ok(Self {
            expert_id: expert_id.into(),
            raw_score,
            calibrated_score,
        })
    }
}

/// Which stage produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictBasis {
    Semantic,
    Signal,
    Arbitration,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub confidence: f64,
    pub basis: VerdictBasis,
}

impl Verdict {
    pub fn new(label: Label, confidence: f64, basis: VerdictBasis) -> Result<Self> {
        check_probability("verdict confidence", confidence)?;
        Ok(Self {
            label,
            confidence,
            basis,
        })
    }

    /// Verdict from a fake-class probability: the label is thresholded and the
    /// confidence is the probability of the chosen label.
    pub fn from_fake_probability(p: f64, threshold: f64, basis: VerdictBasis) -> Self {
        let p = p.clamp(0.0, 1.0);
        let label = Label::from_score(p, threshold);
        let confidence = match label {
            Label::Fake => p,
            Label::Real => 1.0 - p,
        };
        Self {
            label,
            confidence,
            basis,
        }
    }

    /// Probability of the fake class implied by this verdict.
    pub fn fake_probability(&self) -> f64 {
        match self.label {
            Label::Fake => self.confidence,
            Label::Real => 1.0 - self.confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown split {other:?}"))),
        }
    }
}

/// An ordered, named collection of samples with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub name: String,
    pub split: Split,
    samples: Vec<Sample>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, split: Split, samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            split,
            samples,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.samples.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn content_hashes(&self) -> HashSet<ContentHash> {
        self.samples.iter().map(|s| s.content_hash).collect()
    }
}

/// Checks that an identifier is safe to embed in a file name.
pub fn validate_identifier(kind: &str, id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{kind} {id:?} must be 1-128 characters of [A-Za-z0-9._-] and not start with '.'"
        )))
    }
}

/// Returns the first id present in both collections, if any.
pub fn first_overlap<'a>(
    a: impl IntoIterator<Item = &'a str>,
    b: impl IntoIterator<Item = &'a str>,
) -> Option<String> {
    let left: HashSet<&str> = a.into_iter().collect();
    b.into_iter()
        .find(|id| left.contains(id))
        .map(str::to_string)
}
