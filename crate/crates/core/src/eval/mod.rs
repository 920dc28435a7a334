//! Fold plans, metrics, plain and nested cross-validation, and report files.

mod cv;
mod folds;
mod metrics;
mod report;
mod windows;

pub use cv::{
    check_leakage, derive_seed, epoch_fingerprints, kfold_cv, nested_cv, BoxError, CvConfig, CvOutcome, CvTask,
    FoldOutcome, Learner,
};
pub use folds::{kfold, FoldPlan};
pub use metrics::{chance_level, compute_metrics, Metrics};
pub use report::{
    accuracy_chart_svg, average_rows, comparison_csv, emit_report, subjects_csv, windows_csv, ChartFrame,
    ComparisonRow, EvalReport, SubjectReport, SubjectRow, WindowRow, CHART, REPORT_FILES,
};
pub use windows::windowed_rest_action;

use thiserror::Error;

use crate::data::DataError;
use crate::dsp::DspError;
use crate::features::FeatureError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("label {label} outside {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("too few samples for the folds: need {needed}, have {available}{}", class.map(|c| format!(" in class {c}")).unwrap_or_default())]
    TooFewSamples { needed: usize, available: usize, class: Option<usize> },
    #[error("leakage in fold {fold}: test sample {test_index} duplicates training sample {train_index}")]
    Leakage { fold: usize, train_index: usize, test_index: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("model: {0}")]
    Model(#[source] BoxError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, EvalError>;
