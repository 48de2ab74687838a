//! Parameter-free fusion baselines.

use crate::domain::{Label, Verdict, VerdictBasis};
use crate::error::{Error, Result};

/// Label with the most votes; a tie goes to fake. Confidence is the winning
/// fraction.
pub fn majority_vote(verdicts: &[Verdict]) -> Result<Verdict> {
    let labels: Vec<Label> = verdicts.iter().map(|v| v.label).collect();
    majority_of_labels(&labels)
}

pub fn majority_of_labels(labels: &[Label]) -> Result<Verdict> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("majority vote"));
    }
    let fake = labels.iter().filter(|l| **l == Label::Fake).count();
    let real = labels.len() - fake;
    let (label, votes) = if fake >= real {
        (Label::Fake, fake)
    } else {
        (Label::Real, real)
    };
    Verdict::new(label, votes as f64 / labels.len() as f64, VerdictBasis::Baseline)
}

/// Weighted mean `Σ w s / Σ w`.
pub fn probability_average(scores: &[f64], weights: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("probability average"));
    }
    if scores.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "weights must be finite and non-negative, got {w}"
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("weights sum to zero".into()));
    }
    let num: f64 = scores.iter().zip(weights).map(|(s, w)| s * w).sum();
    Ok((num / total).clamp(0.0, 1.0))
}
