use super::{kfold_cv, CvConfig, CvTask, EvalError, Learner, Result, WindowRow};
use crate::data::{EpochSet, Interval};
use crate::dsp::sliding_windows;
use crate::features::{build_feature_matrix, FeatureMatrix, FeatureParams};

/// Rest-versus-window analysis over the action interval: for each window
/// position, every rest epoch (label 0) against that window of every action
/// epoch (label 1), scored by k-fold CV of the learner built on the
/// resulting band-power features.
pub fn windowed_rest_action<L, F>(
    binary: &EpochSet,
    width_s: f64,
    overlap_frac: f64,
    features: &FeatureParams,
    make_learner: F,
    hyper: &L::Hyper,
    config: &CvConfig,
) -> Result<Vec<WindowRow>>
where
    L: Learner,
    F: Fn(FeatureMatrix<f64>) -> L,
{
    if binary.n_classes() != 2 {
        return Err(EvalError::Invalid(format!("rest/action analysis needs 2 classes, got {}", binary.n_classes())));
    }
    let fs = binary.sampling_rate_hz();
    let rest: Vec<_> = binary.epochs().iter().filter(|e| e.label == 0).cloned().collect();
    let windows = binary
        .epochs()
        .iter()
        .filter(|e| e.label == 1)
        .map(|e| sliding_windows(e, fs, width_s, overlap_frac))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let positions = windows.iter().map(Vec::len).min().unwrap_or(0);
    if rest.is_empty() || positions == 0 {
        return Err(EvalError::Invalid("need rest epochs and at least one action window".into()));
    }
    let mut rows = Vec::with_capacity(positions);
    for p in 0..positions {
        let mut epochs = rest.clone();
        epochs.extend(windows.iter().map(|w| w[p].clone()));
        let window_start_s = match windows[0][p].interval {
            Interval::Window { start_s, .. } => start_s,
            _ => unreachable!("sliding windows are tagged with their span"),
        };
        let set = binary.with_epochs(epochs)?;
        let matrix: FeatureMatrix<f64> = build_feature_matrix(&set, features)?;
        let labels = matrix.labels().to_vec();
        let learner = make_learner(matrix);
        let out = kfold_cv(&learner, CvTask { labels: &labels, n_classes: 2, fingerprints: None }, hyper, config)?;
        log::info!("window at {window_start_s:.2} s: accuracy {:.4}", out.metrics.accuracy);
        rows.push(WindowRow { window_start_s, accuracy: out.metrics.accuracy });
    }
    Ok(rows)
}
