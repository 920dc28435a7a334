//! Experiment orchestration: configuration, named presets, per-fold
//! learners and the dataset-to-report run.

mod config;
mod learners;
mod presets;
mod run;

pub use config::{
    input_name, Classifier, DatasetSource, EvalScheme, HyperOverride, Intervals, ModelHyper, NetworkHyper,
    PipelineConfig, Selection, Task, WindowAnalysis,
};
pub use learners::{
    apply_steps, fit_network, fit_steps, gain_provenance, holdout, FeatureLearner, FittedFeatureModel, FittedHead,
    FittedNetwork, FittedStep, RawLearner,
};
pub use presets::{preset, synth_network_hyper, COMPARISON_PRESETS, PRESETS};
pub use run::{
    evaluate, feature_params, load_subjects, prepare, preprocess, run, subject_features, task_epochs, train_models, Prepared,
    RunOutput, TrainedModel, TrainedSubject, CACHE_ENV,
};

use thiserror::Error;

use crate::data::DataError;
use crate::dsp::DspError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::neural::NeuralError;
use crate::shallow::ShallowError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    ConfigInvalid(String),
    #[error("selection: {0}")]
    EmptySelection(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("dsp: {0}")]
    Dsp(#[from] DspError),
    #[error("features: {0}")]
    Feature(#[from] FeatureError),
    #[error("shallow: {0}")]
    Shallow(#[from] ShallowError),
    #[error("neural: {0}")]
    Neural(#[from] NeuralError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Data,
    Numeric,
}

impl PipelineError {
    pub fn kind(&self) -> FailureKind {
        match self {
            PipelineError::ConfigInvalid(_) | PipelineError::Synth(_) => FailureKind::Config,
            PipelineError::Data(_) | PipelineError::Io { .. } | PipelineError::EmptySelection(_) => FailureKind::Data,
            PipelineError::Neural(NeuralError::NonFiniteLoss { .. })
            | PipelineError::Shallow(ShallowError::NonFiniteFeature { .. })
            | PipelineError::Feature(FeatureError::NonFinite { .. } | FeatureError::DegenerateData { .. }) => FailureKind::Numeric,
            PipelineError::Neural(NeuralError::InvalidSpec(_) | NeuralError::InvalidConfig(_))
            | PipelineError::Shallow(ShallowError::InvalidParams(_)) => FailureKind::Config,
            PipelineError::Eval(EvalError::Model(inner)) => match inner.downcast_ref::<PipelineError>() {
                Some(e) => e.kind(),
                None => FailureKind::Data,
            },
            PipelineError::Eval(EvalError::Invalid(_)) => FailureKind::Config,
            _ => FailureKind::Data,
        }
    }
}
