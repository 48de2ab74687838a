use serde::{Deserialize, Serialize};

use crate::domain::{FeatureVector, Modality};
use crate::error::{Error, Result};

use super::kmeans::nearest;

/// Per-dimension standardisation learned from training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Standard deviation per dimension; constant dimensions use 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or(Error::EmptyInput("standardizer rows"))?;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Fitted centroids of one modality, in standardised coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub modality: Modality,
    pub centroids: Vec<Vec<f64>>,
    pub standardizer: Standardizer,
    pub seed: u64,
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.centroids.is_empty() {
            return Err(Error::Parse("cluster model has no centroids".into()));
        }
        let dim = self.dim();
        for c in &self.centroids {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.len(),
                });
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse("non-finite centroid".into()));
            }
        }
        if self.standardizer.scale.len() != dim || self.standardizer.scale.iter().any(|s| *s <= 0.0) {
            return Err(Error::Parse("invalid standardizer".into()));
        }
        Ok(())
    }
}

/// Nearest centroid in standardised space; ties go to the lowest id.
pub fn assign_cluster(model: &ClusterModel, x: &FeatureVector) -> Result<usize> {
    if x.modality != model.modality {
        return Err(Error::InvalidArgument(format!(
            "{} features given to the {} cluster model",
            x.modality, model.modality
        )));
    }
    if x.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x.dim(),
        });
    }
    let z = model.standardizer.transform(x.values());
    Ok(nearest(&model.centroids, &z).0)
}
