use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index sets into a base dataset. All vectors are sorted ascending.
///
/// The four primary sets are pairwise disjoint and equally sized; indices
/// beyond `4 · size` (if any) are listed in `unused`. Each validation set is
/// a subset of its training set and is excluded from the effective training
/// data and from the attack sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPartition {
    pub train_target: Vec<usize>,
    pub test_target: Vec<usize>,
    pub train_shadow: Vec<usize>,
    pub test_shadow: Vec<usize>,
    pub val_target: Vec<usize>,
    pub val_shadow: Vec<usize>,
    pub unused: Vec<usize>,
}

fn minus(set: &[usize], remove: &[usize]) -> Vec<usize> {
    set.iter()
        .copied()
        .filter(|i| remove.binary_search(i).is_err())
        .collect()
}

impl DataPartition {
    /// Target training indices with the validation points removed.
    pub fn fit_target(&self) -> Vec<usize> {
        minus(&self.train_target, &self.val_target)
    }

    pub fn fit_shadow(&self) -> Vec<usize> {
        minus(&self.train_shadow, &self.val_shadow)
    }
}

/// Uniformly random partition into four sets of `size` plus validation
/// subsets of `val_size` drawn from both training sets.
pub fn partition_dataset(
    dataset_size: usize,
    size: usize,
    val_size: usize,
    seed: u64,
) -> Result<DataPartition> {
    if size == 0 || size.checked_mul(4).is_none_or(|t| t > dataset_size) {
        return Err(Error::Config(format!(
            "cannot draw four sets of {size} from {dataset_size} points"
        )));
    }
    if val_size >= size {
        return Err(Error::Config(format!(
            "validation size {val_size} must be below the training set size {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..dataset_size).collect();
    perm.shuffle(&mut rng);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    // each chunk is already in random order, so its prefix is a uniform subset
    let chunk = |k: usize| &perm[k * size..(k + 1) * size];
    Ok(DataPartition {
        train_target: sorted(chunk(0)),
        test_target: sorted(chunk(1)),
        train_shadow: sorted(chunk(2)),
        test_shadow: sorted(chunk(3)),
        val_target: sorted(&chunk(0)[..val_size]),
        val_shadow: sorted(&chunk(2)[..val_size]),
        unused: sorted(&perm[4 * size..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_partition_covers_everything() {
        let p = partition_dataset(8, 2, 1, 3).unwrap();
        let mut all: Vec<usize> = [&p.train_target, &p.test_target, &p.train_shadow, &p.test_shadow]
            .iter()
            .flat_map(|s| s.iter().copied())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        assert!(p.unused.is_empty());
        assert_eq!(p.fit_target().len(), 1);
        assert!(p.train_target.contains(&p.val_target[0]));
        assert_eq!(p, partition_dataset(8, 2, 1, 3).unwrap());
    }

    #[test]
    fn rejects_oversized_requests() {
        assert!(partition_dataset(7, 2, 0, 0).is_err());
        assert!(partition_dataset(8, 2, 2, 0).is_err());
        assert!(partition_dataset(8, 0, 0, 0).is_err());
    }
}
