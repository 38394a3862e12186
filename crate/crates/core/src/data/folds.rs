use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::MtsDataset;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of_sample: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    /// `(train, validation)` sample indices for fold `i`.
    pub fn split(&self, i: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.fold_of_sample.len()).partition(|&s| self.fold_of_sample[s] != i)
    }
}

/// Stratified assignment: each class is shuffled with the seed and dealt
/// round-robin into the folds. The dealing position carries over from one
/// class to the next so that total fold sizes stay balanced as well.
pub fn stratified_folds(ds: &MtsDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 {
        return Err(Error::InvalidArgument("fold count must be positive".into()));
    }
    for (c, &n) in ds.class_counts().iter().enumerate() {
        if n > 0 && n < k {
            return Err(Error::ClassTooSmall(ds.class_names()[c].clone(), k));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_sample = vec![0; ds.len()];
    let mut next = 0;
    for c in 0..ds.num_classes() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels()[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of_sample[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { fold_of_sample, k })
}
