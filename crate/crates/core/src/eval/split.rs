use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub total: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let sum = self
            .train
            .checked_add(self.val)
            .and_then(|s| s.checked_add(self.test));
        if sum != Some(self.total) {
            return Err(EvalError::InvalidSplit(format!(
                "{} + {} + {} != {}",
                self.train, self.val, self.test, self.total
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded Fisher–Yates shuffle of `0..total`, sliced into train, val, and
/// test in that order.
pub fn split_dataset(spec: &SplitSpec) -> Result<DatasetSplit, EvalError> {
    spec.validate()?;
    let mut ids: Vec<usize> = (0..spec.total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let test = ids.split_off(spec.train + spec.val);
    let val = ids.split_off(spec.train);
    Ok(DatasetSplit {
        train: ids,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn everything_in_train() {
        let s = split_dataset(&SplitSpec {
            total: 10,
            train: 10,
            val: 0,
            test: 0,
            seed: 3,
        })
        .unwrap();
        let mut t = s.train.clone();
        t.sort_unstable();
        assert_eq!(t, (0..10).collect::<Vec<_>>());
        assert!(s.val.is_empty() && s.test.is_empty());
    }

    #[test]
    fn sizes_must_sum() {
        assert!(split_dataset(&SplitSpec {
            total: 10,
            train: 5,
            val: 2,
            test: 2,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let spec = SplitSpec {
            total: 100,
            train: 80,
            val: 10,
            test: 10,
            seed: 42,
        };
        assert_eq!(split_dataset(&spec).unwrap(), split_dataset(&spec).unwrap());
        let other = SplitSpec { seed: 43, ..spec };
        assert_ne!(
            split_dataset(&spec).unwrap(),
            split_dataset(&other).unwrap()
        );
    }
}
