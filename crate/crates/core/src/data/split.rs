use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const TRAIN_CAP: usize = 8000;
pub const TEST_CAP: usize = 2000;
pub const SIZES: [usize; 8] = [100, 187, 350, 654, 1223, 2287, 4278, 8000];

/// A fixed train/test partition of record positions. Training subsamples
/// are drawn fresh for every `(n, seed)`, so they are not nested.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `n` positions and takes 80% (at most 8000) for training and the
/// rest (at most 2000) for testing.
pub fn make_splits(n: usize, plan_seed: u64, sizes: &[usize]) -> Result<SplitPlan> {
    let train_len = (n * 4 / 5).min(TRAIN_CAP);
    let test_len = (n - train_len).min(TEST_CAP);
    if let Some(&largest) = sizes.iter().max() {
        if largest > train_len {
            return Err(Error::InsufficientData {
                needed: largest,
                available: train_len,
            });
        }
    }
    if train_len == 0 || test_len == 0 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive_seed(plan_seed, "split")));
    Ok(SplitPlan {
        seed: plan_seed,
        train: order[..train_len].to_vec(),
        test: order[train_len..train_len + test_len].to_vec(),
    })
}

impl SplitPlan {
    /// `n` training positions for `seed`, in training-set order.
    pub fn subsample(&self, n: usize, seed_value: u64) -> Result<Vec<usize>> {
        if n > self.train.len() {
            return Err(Error::InsufficientData {
                needed: n,
                available: self.train.len(),
            });
        }
        let mut rng = seed::rng(seed::derive_seed_n(
            seed::derive_seed(self.seed, "subsample"),
            &n.to_string(),
            seed_value,
        ));
        let mut picked: Vec<usize> = self.train.choose_multiple(&mut rng, n).copied().collect();
        let rank: std::collections::HashMap<usize, usize> = self
            .train
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i))
            .collect();
        picked.sort_by_key(|p| rank[p]);
        Ok(picked)
    }
}
