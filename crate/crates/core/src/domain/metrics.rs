use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Label;

/// A scored prediction paired with its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub truth: Label,
}

impl Prediction {
    pub fn new(score: f64, truth: Label) -> Self {
        Self { score, truth }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Acc {
    pub f1: f64,
    pub acc: f64,
}

/// Binary confusion counts with fake as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, predicted: Label, truth: Label) {
        match (predicted, truth) {
            (Label::Fake, Label::Fake) => self.tp += 1,
            (Label::Fake, Label::Real) => self.fp += 1,
            (Label::Real, Label::Real) => self.tn += 1,
            (Label::Real, Label::Fake) => self.fn_ += 1,
        }
    }

    pub fn from_labels(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Self::default();
        for (p, t) in pairs {
            c.record(p, t);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }

    /// F1 is 0 when precision + recall is 0. Accuracy of an empty set is 0.
    pub fn f1_acc(&self) -> F1Acc {
        let denom = 2 * self.tp + self.fp + self.fn_;
        let f1 = if denom == 0 || self.tp == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        };
        let total = self.total();
        let acc = if total == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        };
        F1Acc { f1, acc }
    }
}

/// F1 (fake positive) and accuracy of thresholded scores.
pub fn f1_acc(predictions: &[Prediction], threshold: f64) -> Result<F1Acc> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let counts = ConfusionCounts::from_labels(
        predictions
            .iter()
            .map(|p| (Label::from_score(p.score, threshold), p.truth)),
    );
    Ok(counts.f1_acc())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn p(score: f64, fake: bool) -> Prediction {
        Prediction::new(score, if fake { Label::Fake } else { Label::Real })
    }

    #[test]
    fn perfect_classifier() {
        let preds = [p(0.9, true), p(0.1, false), p(0.7, true)];
        let r = f1_acc(&preds, 0.5).unwrap();
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.acc, 1.0);
    }

    #[test]
    fn hand_computed_fixture() {
        // TP=2, FP=1, FN=1, TN=1
        let preds = [
            p(0.9, true),
            p(0.8, true),
            p(0.7, false),
            p(0.2, true),
            p(0.1, false),
        ];
        let r = f1_acc(&preds, 0.5).unwrap();
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.acc - 0.6).abs() < 1e-12);
    }

    #[test]
    fn all_wrong_fake_predictions() {
        let preds = [p(0.9, false), p(0.6, false)];
        let r = f1_acc(&preds, 0.5).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.acc, 0.0);
    }

    #[test]
    fn empty_and_bad_threshold() {
        assert!(matches!(f1_acc(&[], 0.5), Err(Error::EmptyInput(_))));
        assert!(f1_acc(&[p(0.5, true)], 1.0).is_err());
        assert!(f1_acc(&[p(0.5, true)], 0.0).is_err());
    }

    #[test]
    fn score_at_threshold_counts_as_fake() {
        let r = f1_acc(&[p(0.5, true)], 0.5).unwrap();
        assert_eq!(r.acc, 1.0);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            raw in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..40),
            seed in any::<u64>(),
        ) {
            let preds: Vec<_> = raw.iter().map(|&(s, t)| p(s, t)).collect();
            let mut shuffled = preds.clone();
            // deterministic rotation + reversal as the permutation
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = f1_acc(&preds, 0.5).unwrap();
            let b = f1_acc(&shuffled, 0.5).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn accuracy_sweep_has_at_most_n_plus_one_values(
            raw in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..25),
        ) {
            let preds: Vec<_> = raw.iter().map(|&(s, t)| p(s, t)).collect();
            let mut seen: Vec<u64> = Vec::new();
            for i in 1..200 {
                let t = i as f64 / 200.0;
                let acc = f1_acc(&preds, t).unwrap().acc;
                let bits = acc.to_bits();
                if !seen.contains(&bits) {
                    seen.push(bits);
                }
            }
            prop_assert!(seen.len() <= preds.len() + 1);
        }
    }
}
