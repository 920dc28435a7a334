use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, kfold, EvalError, FoldPlan, Metrics, Result};
use crate::data::EpochSet;

pub type BoxError = Box<dyn std::error::Error + Send + Sync>;

/// Something that can be fitted on one index subset of a fixed dataset and
/// predict labels for another.
///
/// Implementations must derive every fitted quantity (scaling, projection,
/// selection, weights) from `train` alone.
pub trait Learner: Sync {
    type Hyper: Clone + Debug + Serialize + Send + Sync;

    fn fit_predict(&self, train: &[usize], test: &[usize], hyper: &Self::Hyper, seed: u64) -> std::result::Result<Vec<usize>, BoxError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub outer_k: usize,
    pub inner_k: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { outer_k: 4, inner_k: 3, stratified: true, seed: 0 }
    }
}

/// Labels plus optional per-sample content fingerprints; with fingerprints,
/// every outer split is checked for a test sample duplicated into training.
#[derive(Debug, Clone, Copy)]
pub struct CvTask<'a> {
    pub labels: &'a [usize],
    pub n_classes: usize,
    pub fingerprints: Option<&'a [u64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome<H> {
    pub fold: usize,
    pub hyper: H,
    pub hyper_index: usize,
    /// Mean inner validation accuracy per grid entry (empty without a search).
    pub inner_accuracy: Vec<f64>,
    pub test: Vec<usize>,
    pub predictions: Vec<usize>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome<H> {
    pub plan: FoldPlan,
    pub folds: Vec<FoldOutcome<H>>,
    /// Mean over outer folds.
    pub metrics: Metrics,
}

/// SplitMix64 step, used to derive independent fold seeds.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Content hash of each epoch (samples and shape, not the label).
pub fn epoch_fingerprints(set: &EpochSet) -> Vec<u64> {
    set.epochs()
        .iter()
        .map(|e| {
            let mut h = std::collections::hash_map::DefaultHasher::new();
            (e.n_channels(), e.n_timesteps()).hash(&mut h);
            for v in e.data() {
                v.to_bits().hash(&mut h);
            }
            h.finish()
        })
        .collect()
}

/// Fails when a test sample's fingerprint also occurs among the training samples.
pub fn check_leakage(fold: usize, train: &[usize], test: &[usize], fingerprints: &[u64]) -> Result<()> {
    let seen: HashMap<u64, usize> = train.iter().map(|&i| (fingerprints[i], i)).collect();
    for &j in test {
        if let Some(&i) = seen.get(&fingerprints[j]) {
            return Err(EvalError::Leakage { fold, train_index: i, test_index: j });
        }
    }
    Ok(())
}

fn validate_task(task: &CvTask<'_>) -> Result<()> {
    if task.n_classes < 2 {
        return Err(EvalError::Invalid(format!("{} classes", task.n_classes)));
    }
    if let Some(&l) = task.labels.iter().find(|&&l| l >= task.n_classes) {
        return Err(EvalError::LabelOutOfRange { label: l, n_classes: task.n_classes });
    }
    if let Some(fp) = task.fingerprints {
        if fp.len() != task.labels.len() {
            return Err(EvalError::LengthMismatch { expected: task.labels.len(), actual: fp.len() });
        }
    }
    Ok(())
}

fn fit_score<L: Learner>(
    learner: &L,
    train: &[usize],
    test: &[usize],
    hyper: &L::Hyper,
    seed: u64,
    task: &CvTask<'_>,
) -> Result<(Vec<usize>, Metrics)> {
    let pred = learner.fit_predict(train, test, hyper, seed).map_err(EvalError::Model)?;
    if pred.len() != test.len() {
        return Err(EvalError::LengthMismatch { expected: test.len(), actual: pred.len() });
    }
    let truth: Vec<usize> = test.iter().map(|&i| task.labels[i]).collect();
    let metrics = compute_metrics(&truth, &pred, task.n_classes)?;
    Ok((pred, metrics))
}

/// Index of the best mean inner accuracy over the grid (first on ties).
fn inner_search<L: Learner>(
    learner: &L,
    outer_train: &[usize],
    grid: &[L::Hyper],
    fold_seed: u64,
    config: &CvConfig,
    task: &CvTask<'_>,
) -> Result<(usize, Vec<f64>)> {
    let labels: Vec<usize> = outer_train.iter().map(|&i| task.labels[i]).collect();
    let plan = kfold(labels.len(), &labels, config.inner_k, config.stratified, derive_seed(fold_seed, u64::MAX))?;
    let mut scores = Vec::with_capacity(grid.len());
    for hyper in grid {
        let mut total = 0.0;
        for f in 0..plan.k {
            let tr: Vec<usize> = plan.train_indices(f).into_iter().map(|i| outer_train[i]).collect();
            let te: Vec<usize> = plan.test_indices(f).into_iter().map(|i| outer_train[i]).collect();
            total += fit_score(learner, &tr, &te, hyper, derive_seed(fold_seed, 1 + f as u64), task)?.1.accuracy;
        }
        scores.push(total / plan.k as f64);
    }
    let best = (0..scores.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
    Ok((best, scores))
}

/// Outer k-fold evaluation; with more than one grid entry each outer fold
/// first picks its hyperparameters by inner k-fold on its training part.
pub fn nested_cv<L: Learner>(
    learner: &L,
    task: CvTask<'_>,
    grid: &[L::Hyper],
    config: &CvConfig,
) -> Result<CvOutcome<L::Hyper>> {
    if grid.is_empty() {
        return Err(EvalError::Invalid("empty hyperparameter grid".into()));
    }
    validate_task(&task)?;
    let n = task.labels.len();
    let plan = kfold(n, task.labels, config.outer_k, config.stratified, config.seed)?;
    let folds = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let (train, test) = (plan.train_indices(f), plan.test_indices(f));
            if let Some(fp) = task.fingerprints {
                check_leakage(f, &train, &test, fp)?;
            }
            let fold_seed = derive_seed(config.seed, f as u64);
            let (hyper_index, inner_accuracy) = if grid.len() == 1 {
                (0, Vec::new())
            } else {
                inner_search(learner, &train, grid, fold_seed, config, &task)?
            };
            let hyper = grid[hyper_index].clone();
            let (predictions, metrics) = fit_score(learner, &train, &test, &hyper, fold_seed, &task)?;
            log::info!("fold {f}: accuracy {:.4} with {hyper:?}", metrics.accuracy);
            Ok(FoldOutcome { fold: f, hyper, hyper_index, inner_accuracy, test, predictions, metrics })
        })
        .collect::<Result<Vec<_>>>()?;
    let metrics = Metrics::mean(&folds.iter().map(|f| f.metrics.clone()).collect::<Vec<_>>())?;
    Ok(CvOutcome { plan, folds, metrics })
}

/// Plain k-fold evaluation of one configuration.
pub fn kfold_cv<L: Learner>(learner: &L, task: CvTask<'_>, hyper: &L::Hyper, config: &CvConfig) -> Result<CvOutcome<L::Hyper>> {
    nested_cv(learner, task, std::slice::from_ref(hyper), config)
}
