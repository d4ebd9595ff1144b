//! Sample splitting for cross-fitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of `0..n` into `k` nonempty folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    /// Wraps an explicit assignment, checking that every fold is used.
    pub fn from_assignment(fold_of: Vec<usize>, k: usize) -> Result<Self> {
        let n = fold_of.len();
        if k < 2 || k > n {
            return Err(Error::KOutOfRange { k, n });
        }
        let mut seen = vec![false; k];
        for &f in &fold_of {
            if f >= k {
                return Err(Error::InvalidArgument(format!("fold index {f} >= K = {k}")));
            }
            seen[f] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("empty fold".into()));
        }
        Ok(FoldAssignment { fold_of, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.fold_of[i]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.fold_of
    }

    /// Indices belonging to `fold`, in increasing order.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Randomly splits `0..n` into `k` folds whose sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_even_split() {
        let folds = make_folds(4, 2, 1).unwrap();
        assert_eq!(folds.sizes(), vec![2, 2]);
    }

    #[test]
    fn remainder_goes_to_first_fold() {
        let folds = make_folds(5, 2, 1).unwrap();
        assert_eq!(folds.sizes(), vec![3, 2]);
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(make_folds(50, 3, 9).unwrap(), make_folds(50, 3, 9).unwrap());
        assert_ne!(make_folds(50, 3, 9).unwrap(), make_folds(50, 3, 10).unwrap());
    }

    #[test]
    fn rejects_bad_k() {
        assert_eq!(make_folds(5, 1, 0).unwrap_err().code(), "K_OUT_OF_RANGE");
        assert_eq!(make_folds(5, 6, 0).unwrap_err().code(), "K_OUT_OF_RANGE");
    }

    proptest! {
        #[test]
        fn folds_partition_indices(n in 2usize..200, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
            let k = 2 + ((n - 2) as f64 * k_frac) as usize;
            let folds = make_folds(n, k, seed).unwrap();
            let sizes = folds.sizes();
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            prop_assert!(*lo >= 1);
            prop_assert!(hi - lo <= 1);
            let mut all: Vec<usize> = (0..k).flat_map(|f| folds.members(f)).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
