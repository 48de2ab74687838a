//! Line-delimited JSON formats for dataset manifests and feature sidecars.
//!
//! A manifest file holds one [`Sample`] per line. It may start with a header
//! line `{"name": ..., "split": ...}`, recognised by the absence of an `id`
//! field. Feature sidecars hold `{id, modality, values}` records.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_jsonl_values, write_jsonl};
use crate::error::{Error, Result};

use super::{DatasetManifest, FeatureRegistry, FeatureVector, Modality, Sample, Split};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestHeader {
    name: String,
    split: Split,
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let header = serde_json::to_value(ManifestHeader {
        name: manifest.name.clone(),
        split: manifest.split,
    })
    .map_err(|e| Error::json("manifest header", e))?;
    write_jsonl(path, Some(&header), manifest.samples())
}

/// Reads a manifest. When the file has no header line, `fallback` supplies the
/// name and split.
pub fn read_manifest(path: &Path, fallback: Option<(&str, Split)>) -> Result<DatasetManifest> {
    let values = read_jsonl_values(path)?;
    let mut iter = values.into_iter().peekable();
    let header = match iter.peek() {
        Some(v) if v.get("id").is_none() => {
            let v = iter.next().expect("peeked");
            Some(
                serde_json::from_value::<ManifestHeader>(v)
                    .map_err(|e| Error::json(format!("{} header", path.display()), e))?,
            )
        }
        _ => None,
    };
    let (name, split) = match (header, fallback) {
        (Some(h), _) => (h.name, h.split),
        (None, Some((n, s))) => (n.to_string(), s),
        (None, None) => {
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            (stem, Split::Test)
        }
    };
    let samples = iter
        .enumerate()
        .map(|(i, v)| {
            serde_json::from_value::<Sample>(v)
                .map_err(|e| Error::json(format!("{} sample {}", path.display(), i + 1), e))
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetManifest::new(name, split, samples)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub modality: Modality,
    pub values: Vec<f64>,
}

/// Feature vectors indexed by sample id and modality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    by_id: HashMap<String, BTreeMap<Modality, FeatureVector>>,
}

impl FeatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, v: FeatureVector) {
        self.by_id.entry(id.into()).or_default().insert(v.modality, v);
    }

    pub fn get(&self, id: &str, modality: Modality) -> Option<&FeatureVector> {
        self.by_id.get(id).and_then(|m| m.get(&modality))
    }

    /// Every vector recorded for `id`, keyed by modality.
    pub fn vectors_of(&self, id: &str) -> BTreeMap<Modality, FeatureVector> {
        self.by_id.get(id).cloned().unwrap_or_default()
    }

    pub fn modalities_of(&self, id: &str) -> Vec<Modality> {
        self.by_id
            .get(id)
            .map(|m| m.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn merge(&mut self, other: FeatureTable) {
        for (id, m) in other.by_id {
            self.by_id.entry(id).or_default().extend(m);
        }
    }

    /// Records sorted by id, then modality.
    pub fn records(&self) -> Vec<FeatureRecord> {
        let mut ids: Vec<&String> = self.by_id.keys().collect();
        ids.sort();
        let mut out = Vec::new();
        for id in ids {
            for (m, v) in &self.by_id[id] {
                out.push(FeatureRecord {
                    id: id.clone(),
                    modality: *m,
                    values: v.values().to_vec(),
                });
            }
        }
        out
    }
}

pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    write_jsonl(path, None, &table.records())
}

/// Reads a sidecar, checking each vector against `registry`.
pub fn read_features(path: &Path, registry: &FeatureRegistry) -> Result<FeatureTable> {
    let mut table = FeatureTable::new();
    for (i, v) in read_jsonl_values(path)?.into_iter().enumerate() {
        let rec: FeatureRecord = serde_json::from_value(v)
            .map_err(|e| Error::json(format!("{} feature {}", path.display(), i + 1), e))?;
        let fv = FeatureVector::new(rec.modality, rec.values)?;
        registry.check(&fv)?;
        table.insert(rec.id, fv);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{hash_content, Label};

    fn sample(id: &str, label: Label) -> Sample {
        Sample {
            id: id.into(),
            source_dataset: "set-a".into(),
            ground_truth: label,
            content_hash: hash_content(id.as_bytes()),
            feature_refs: BTreeMap::from([(Modality::Srm, "f.jsonl".to_string())]),
            image_locator: Some(format!("img/{id}.png")),
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let m = DatasetManifest::new(
            "demo",
            Split::Val,
            vec![sample("a", Label::Fake), sample("b", Label::Real)],
        )
        .unwrap();
        write_manifest(&p, &m).unwrap();
        let back = read_manifest(&p, None).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn headerless_manifest_uses_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        write_jsonl(&p, None, &[sample("a", Label::Fake)]).unwrap();
        let m = read_manifest(&p, Some(("x", Split::Train))).unwrap();
        assert_eq!(m.name, "x");
        assert_eq!(m.split, Split::Train);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn bad_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let mut v = serde_json::to_value(sample("a", Label::Fake)).unwrap();
        v["ground_truth"] = serde_json::json!(3);
        std::fs::write(&p, format!("{v}\n")).unwrap();
        assert!(read_manifest(&p, None).is_err());
    }

    #[test]
    fn features_round_trip_and_dim_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.jsonl");
        let mut t = FeatureTable::new();
        t.insert("a", FeatureVector::new(Modality::Srm, vec![0.5; 34]).unwrap());
        t.insert("a", FeatureVector::new(Modality::Cfa, vec![0.25; 64]).unwrap());
        write_features(&p, &t).unwrap();
        let back = read_features(&p, &FeatureRegistry::default()).unwrap();
        assert_eq!(back, t);
        let small = FeatureRegistry::default().with_dim(Modality::Srm, 3);
        assert!(matches!(
            read_features(&p, &small),
            Err(Error::DimensionMismatch { expected: 3, found: 34 })
        ));
    }
}
