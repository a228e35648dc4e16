//! Deterministic K-fold cross-fitting plans with a second-order half split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Marks a unit's own fold in [`FoldPlan::half_id`].
pub const OWN_FOLD: u8 = u8::MAX;

/// Assignment of units to `K` folds, plus, for every fold complement, a
/// binary half label splitting it into two near-equal parts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    fold_id: Vec<usize>,
    // half_id[k][i]: half of unit i within the complement of fold k
    half_id: Vec<Vec<u8>>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.fold_id.len()
    }

    pub fn fold_id(&self) -> &[usize] {
        &self.fold_id
    }

    /// Rebuild a plan from explicit assignments, checking that every fold is
    /// nonempty and that each complement is split into halves 0 and 1.
    pub fn from_parts(fold_id: Vec<usize>, half_id: Vec<Vec<u8>>) -> Result<Self> {
        let k = half_id.len();
        let n = fold_id.len();
        if k < 2 || k > n {
            return Err(Error::Argument(format!(
                "fold count {k} invalid for {n} units"
            )));
        }
        for f in 0..k {
            if !fold_id.contains(&f) {
                return Err(Error::Argument(format!("fold {f} is empty")));
            }
            if half_id[f].len() != n {
                return Err(Error::Argument(format!(
                    "half labels of fold {f} have wrong length"
                )));
            }
            for i in 0..n {
                let own = fold_id[i] == f;
                let h = half_id[f][i];
                if fold_id[i] >= k || own != (h == OWN_FOLD) || (!own && h > 1) {
                    return Err(Error::Argument(format!(
                        "inconsistent assignment of unit {i} in fold {f}"
                    )));
                }
            }
        }
        Ok(FoldPlan {
            k,
            fold_id,
            half_id,
        })
    }

    /// Half labels within the complement of fold `k` ([`OWN_FOLD`] for
    /// members of fold `k`).
    pub fn half_id(&self, k: usize) -> &[u8] {
        &self.half_id[k]
    }

    /// Units in fold `k`, ascending.
    pub fn test_rows(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_id[i] == k).collect()
    }

    /// Units outside fold `k`, ascending.
    pub fn train_rows(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_id[i] != k).collect()
    }

    /// Units outside fold `k` in the given half (0 or 1), ascending.
    pub fn half_rows(&self, k: usize, half: u8) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.half_id[k][i] == half)
            .collect()
    }
}

/// Build a fold plan fully determined by `(n, k, seed)`.
///
/// Units are shuffled once; the j-th unit of the permutation goes to fold
/// `j mod k`, so fold sizes differ by at most one. Each fold complement is
/// then shuffled on its own stream and split by alternating labels.
pub fn make_fold_plan(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Argument(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    if k > n {
        return Err(Error::Argument(format!(
            "fold count {k} exceeds sample size {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut fold_id = vec![0; n];
    for (j, &unit) in perm.iter().enumerate() {
        fold_id[unit] = j % k;
    }

    let half_id = (0..k)
        .map(|f| {
            let mut rest: Vec<usize> = (0..n).filter(|&i| fold_id[i] != f).collect();
            let stream = seed ^ (f as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
            rest.shuffle(&mut ChaCha8Rng::seed_from_u64(stream));
            let mut halves = vec![OWN_FOLD; n];
            for (j, &unit) in rest.iter().enumerate() {
                halves[unit] = (j % 2) as u8;
            }
            halves
        })
        .collect();
    Ok(FoldPlan {
        k,
        fold_id,
        half_id,
    })
}
