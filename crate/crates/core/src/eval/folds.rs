use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalError, Result};

/// Assignment of every sample to one of `k` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub stratified: bool,
    pub seed: u64,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded k-fold split. Stratified plans shuffle each class and deal its
/// members round-robin, continuing the deal across classes so that both the
/// per-class and the total fold sizes differ by at most one.
pub fn kfold(n: usize, labels: &[usize], k: usize, stratified: bool, seed: u64) -> Result<FoldPlan> {
    if labels.len() != n {
        return Err(EvalError::LengthMismatch { expected: n, actual: labels.len() });
    }
    if k < 2 {
        return Err(EvalError::Invalid(format!("k = {k}; need at least 2 folds")));
    }
    if n < k {
        return Err(EvalError::TooFewSamples { needed: k, available: n, class: None });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; n];
    if stratified {
        let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
        let mut next = 0;
        for c in 0..n_classes {
            let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            if members.len() < k {
                return Err(EvalError::TooFewSamples { needed: k, available: members.len(), class: Some(c) });
            }
            members.shuffle(&mut rng);
            for i in members {
                assignments[i] = next % k;
                next += 1;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (pos, i) in order.into_iter().enumerate() {
            assignments[i] = pos % k;
        }
    }
    Ok(FoldPlan { k, assignments, stratified, seed })
}
