use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::seed;
use crate::{Error, Result};

/// Percentages for train, test and validation, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ratios: [u32; 3],
    pub seed: u64,
}

impl SplitConfig {
    pub fn new(ratios: [u32; 3], seed: u64) -> Result<Self> {
        if ratios.iter().any(|&r| r == 0) || ratios.iter().sum::<u32>() != 100 {
            return Err(Error::Config(format!(
                "split ratios must be positive and sum to 100, got {ratios:?}"
            )));
        }
        Ok(Self { ratios, seed })
    }

    /// `(train, test, validation)` sizes for `n` rows: train and test are
    /// floored, validation takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = n * self.ratios[0] as usize / 100;
        let test = n * self.ratios[1] as usize / 100;
        (train, test, n - train - test)
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: [80, 10, 10],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub validation: LabeledDataset,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub validation_idx: Vec<usize>,
}

pub const MIN_SPLIT_ROWS: usize = 10;

/// Shuffles row indices with the config seed, then slices the permutation
/// into train, test and validation blocks.
pub fn split(dataset: &LabeledDataset, cfg: &SplitConfig) -> Result<Split> {
    let n = dataset.len();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::TooFewRows {
            needed: MIN_SPLIT_ROWS,
            found: n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(cfg.seed));
    let (n_train, n_test, _) = cfg.sizes(n);
    let validation_idx = perm.split_off(n_train + n_test);
    let test_idx = perm.split_off(n_train);
    let train_idx = perm;
    Ok(Split {
        train: dataset.subset(&train_idx),
        test: dataset.subset(&test_idx),
        validation: dataset.subset(&validation_idx),
        train_idx,
        test_idx,
        validation_idx,
    })
}
