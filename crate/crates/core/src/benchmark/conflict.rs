use serde::{Deserialize, Serialize};

use crate::domain::Label;
use crate::error::{check_probability, Error, Result};

/// Largest panel size whose cells fit in a `u64` index.
pub const MAX_EXPERTS: usize = 62;

/// Which experts misclassify a sample, plus its ground truth.
///
/// The cell index packs `[E_1 .. E_j | GT]` with `E_1` as the most significant
/// bit and the ground truth as the least significant bit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConflictVector {
    pub errors: Vec<bool>,
    pub gt: Label,
}

impl ConflictVector {
    pub fn new(errors: Vec<bool>, gt: Label) -> Result<Self> {
        if errors.len() > MAX_EXPERTS {
            return Err(Error::Overflow(format!(
                "{} experts exceed the {MAX_EXPERTS}-expert cell index",
                errors.len()
            )));
        }
        Ok(Self { errors, gt })
    }

    pub fn experts(&self) -> usize {
        self.errors.len()
    }

    pub fn cell_index(&self) -> u64 {
        let mut idx = 0u64;
        for e in &self.errors {
            idx = (idx << 1) | u64::from(*e);
        }
        (idx << 1) | u64::from(self.gt.bit())
    }

    pub fn from_cell(index: u64, experts: usize) -> Result<Self> {
        if experts > MAX_EXPERTS {
            return Err(Error::Overflow(format!("{experts} experts")));
        }
        let cells = 1u64 << (experts + 1);
        if index >= cells {
            return Err(Error::InvalidArgument(format!(
                "cell {index} out of range for {experts} experts"
            )));
        }
        let gt = if index & 1 == 1 { Label::Fake } else { Label::Real };
        let errors = (0..experts)
            .map(|i| (index >> (experts - i)) & 1 == 1)
            .collect();
        Ok(Self { errors, gt })
    }

    pub fn correct_count(&self) -> usize {
        self.errors.iter().filter(|e| !**e).count()
    }

    /// `[0,1,0,1|1]` style rendering.
    pub fn render(&self) -> String {
        let bits: Vec<&str> = self.errors.iter().map(|e| if *e { "1" } else { "0" }).collect();
        format!("[{}|{}]", bits.join(","), self.gt.bit())
    }
}

/// Error pattern of a panel on one sample. A prediction is fake iff its score
/// reaches the threshold.
pub fn conflict_vector(scores: &[f64], gt: Label, threshold: f64) -> Result<ConflictVector> {
    for s in scores {
        check_probability("expert score", *s)?;
    }
    let errors = scores
        .iter()
        .map(|s| Label::from_score(*s, threshold) != gt)
        .collect();
    ConflictVector::new(errors, gt)
}

/// Number of benchmark samples the protocol asks for: `2^(j+1) * d * n`.
pub fn target_size(experts: usize, datasets: usize, per_cell: usize) -> Result<u64> {
    if datasets == 0 || per_cell == 0 {
        return Err(Error::InvalidArgument(
            "dataset count and per-cell count must be positive".into(),
        ));
    }
    let overflow = || Error::Overflow(format!("target_size({experts}, {datasets}, {per_cell})"));
    let shift = u32::try_from(experts + 1).map_err(|_| overflow())?;
    let cells = 1u64.checked_shl(shift).filter(|_| shift < 64).ok_or_else(overflow)?;
    cells
        .checked_mul(datasets as u64)
        .and_then(|x| x.checked_mul(per_cell as u64))
        .ok_or_else(overflow)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn all_correct_real() {
        let v = conflict_vector(&[0.1, 0.2, 0.3, 0.4], Label::Real, 0.5).unwrap();
        assert_eq!(v.render(), "[0,0,0,0|0]");
        assert_eq!(v.cell_index(), 0);
    }

    #[test]
    fn mixed_fake_fixture() {
        let v = conflict_vector(&[0.7, 0.2, 0.6, 0.4], Label::Fake, 0.5).unwrap();
        assert_eq!(v.errors, vec![false, true, false, true]);
        assert_eq!(v.render(), "[0,1,0,1|1]");
        assert_eq!(v.cell_index(), 0b01011);
    }

    #[test]
    fn flipping_truth_complements_errors() {
        let s = [0.7, 0.2, 0.6, 0.5];
        let a = conflict_vector(&s, Label::Fake, 0.5).unwrap();
        let b = conflict_vector(&s, Label::Real, 0.5).unwrap();
        for (x, y) in a.errors.iter().zip(&b.errors) {
            assert_eq!(*x, !*y);
        }
    }

    #[test]
    fn target_sizes() {
        assert_eq!(target_size(4, 7, 15).unwrap(), 3360);
        assert_eq!(target_size(0, 1, 1).unwrap(), 2);
        assert_eq!(target_size(1, 2, 3).unwrap(), 24);
        assert!(matches!(target_size(63, 1, 1), Err(Error::Overflow(_))));
        assert!(matches!(target_size(60, 8, 1), Err(Error::Overflow(_))));
        assert!(target_size(2, 0, 1).is_err());
    }

    #[test]
    fn from_cell_rejects_out_of_range() {
        assert!(ConflictVector::from_cell(32, 4).is_err());
    }

    proptest! {
        #[test]
        fn bit_pack_round_trip(j in 0usize..=8, raw in any::<u64>()) {
            let idx = raw % (1u64 << (j + 1));
            let v = ConflictVector::from_cell(idx, j).unwrap();
            prop_assert_eq!(v.cell_index(), idx);
            let again = ConflictVector::new(v.errors.clone(), v.gt).unwrap();
            prop_assert_eq!(again, v);
        }
    }
}
