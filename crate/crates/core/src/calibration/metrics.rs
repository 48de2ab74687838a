use serde::{Deserialize, Serialize};

use crate::domain::Label;
use crate::error::{check_probability, Error, Result};

/// Default number of equal-width ECE bins.
pub const DEFAULT_ECE_BINS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub count: usize,
    pub mean_confidence: f64,
    pub empirical_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityMetrics {
    pub ece: f64,
    pub brier: f64,
    pub bin_count: usize,
    pub per_bin: Vec<BinStat>,
}

impl ReliabilityMetrics {
    pub fn sample_count(&self) -> usize {
        self.per_bin.iter().map(|b| b.count).sum()
    }
}

/// Equal-width bin index over `[0, 1]` with the last bin right-closed.
pub fn bin_index(score: f64, bins: usize) -> usize {
    let idx = (score * bins as f64).floor();
    if idx < 0.0 {
        0
    } else {
        (idx as usize).min(bins - 1)
    }
}

fn check_inputs(scores: &[f64], labels: &[Label]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    for &s in scores {
        check_probability("score", s)?;
    }
    Ok(())
}

pub fn brier_score(scores: &[f64], labels: &[Label]) -> Result<f64> {
    check_inputs(scores, labels)?;
    Ok(brier_unchecked(scores, labels))
}

fn brier_unchecked(scores: &[f64], labels: &[Label]) -> f64 {
    let sum: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, l)| (s - l.as_f64()).powi(2))
        .sum();
    sum / scores.len() as f64
}

/// Binned calibration error over fake-class probabilities, plus the Brier score.
pub fn expected_calibration_error(
    scores: &[f64],
    labels: &[Label],
    bins: usize,
) -> Result<ReliabilityMetrics> {
    check_inputs(scores, labels)?;
    if bins == 0 {
        return Err(Error::InvalidArgument("bin count must be positive".into()));
    }
    let mut count = vec![0usize; bins];
    let mut sum_conf = vec![0.0f64; bins];
    let mut pos = vec![0usize; bins];
    for (&s, l) in scores.iter().zip(labels) {
        let b = bin_index(s, bins);
        count[b] += 1;
        sum_conf[b] += s;
        if *l == Label::Fake {
            pos[b] += 1;
        }
    }
    let n = scores.len() as f64;
    let mut ece = 0.0;
    let mut per_bin = Vec::with_capacity(bins);
    for b in 0..bins {
        if count[b] == 0 {
            per_bin.push(BinStat {
                count: 0,
                mean_confidence: 0.0,
                empirical_accuracy: 0.0,
            });
            continue;
        }
        let c = count[b] as f64;
        let conf = sum_conf[b] / c;
        let acc = pos[b] as f64 / c;
        ece += (c / n) * (acc - conf).abs();
        per_bin.push(BinStat {
            count: count[b],
            mean_confidence: conf,
            empirical_accuracy: acc,
        });
    }
    Ok(ReliabilityMetrics {
        ece,
        brier: brier_unchecked(scores, labels),
        bin_count: bins,
        per_bin,
    })
}
