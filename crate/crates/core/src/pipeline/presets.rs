use std::path::PathBuf;

use super::config::*;
use crate::neural::{InputKind, TrainConfig};

fn base(task: Task, input: InputKind, classifier: Classifier, selection: Vec<Selection>, eval: EvalScheme) -> PipelineConfig {
    PipelineConfig {
        dataset: DatasetSource::Files { paths: vec![] },
        profile: Some("thinking-out-loud".into()),
        task,
        input,
        classifier,
        selection,
        eval,
        stratified: true,
        seed: 0,
        output_dir: PathBuf::from("out"),
        features: Default::default(),
        hyper: Default::default(),
        grid: vec![],
        intervals: Default::default(),
        windows: None,
    }
}

fn deep(input: InputKind, classifier: Classifier, selection: Vec<Selection>) -> PipelineConfig {
    let mut c = base(Task::MulticlassWords, input, classifier, selection, EvalScheme::Nested { outer: 4, inner: 3 });
    c.grid = [0.01, 0.1].map(|lr| HyperOverride { learning_rate: Some(lr), ..Default::default() }).to_vec();
    c
}

/// Small recurrent model and short schedule sized for the synthetic set.
pub fn synth_network_hyper() -> ModelHyper {
    ModelHyper {
        network: NetworkHyper { hidden: 8, dense: [16, 16], dropout: [0.2, 0.2] },
        train: TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 16,
            max_epochs: 20,
            patience: 4,
            clip_norm: Some(5.0),
            seed: 0,
        },
        ..Default::default()
    }
}

const GAIN: f64 = 0.95;

/// Named experiments: the eight comparison rows on the four-word task, the
/// rest/action analyses, and runs on the synthetic generator.
pub fn preset(name: &str) -> Option<PipelineConfig> {
    use Classifier::*;
    use InputKind::*;
    let kfold = EvalScheme::Kfold { k: 4 };
    let mif = || vec![Selection::GainIntersect { threshold: GAIN }];
    let synth = |mut c: PipelineConfig| {
        c.dataset = DatasetSource::SynthDefault { snr: 10.0, seed: 0 };
        c.profile = None;
        c
    };
    Some(match name {
        "svm-left-pca" => base(
            Task::MulticlassWords,
            PsdFeatures,
            Svm,
            vec![Selection::LeftHemisphere, Selection::Pca { variance: 0.99 }],
            kfold,
        ),
        "gbt-pca" => base(Task::MulticlassWords, PsdFeatures, Gbt, vec![Selection::Pca { variance: 0.99 }], kfold),
        "lstm-mif" => deep(PsdFeatures, Lstm, mif()),
        "lstm-raw-all" => deep(RawAll, Lstm, vec![]),
        "lstm-raw-mif" => deep(RawSelected, Lstm, mif()),
        "bilstm-mif" => deep(PsdFeatures, Bilstm, mif()),
        "bilstm-raw-all" => deep(RawAll, Bilstm, vec![]),
        "bilstm-raw-mif" => deep(RawSelected, Bilstm, mif()),
        "binary-svm-gain" => {
            let mut c = base(Task::BinaryRestAction, PsdFeatures, Svm, vec![Selection::Gain { threshold: 0.9 }], kfold);
            c.windows = Some(WindowAnalysis { width_s: 0.5, overlap: 0.5 });
            c
        }
        "binary-gbt-pca" => base(Task::BinaryRestAction, PsdFeatures, Gbt, vec![Selection::Pca { variance: 0.99 }], kfold),
        "synth-bilstm" => {
            let mut c = synth(base(Task::MulticlassWords, RawAll, Bilstm, vec![], kfold));
            c.hyper = synth_network_hyper();
            c
        }
        "synth-svm" => synth(base(Task::MulticlassWords, PsdFeatures, Svm, vec![], kfold)),
        "synth-gbt" => synth(base(Task::MulticlassWords, PsdFeatures, Gbt, vec![], kfold)),
        _ => return None,
    })
}

/// Rows of the model comparison table, in table order.
pub const COMPARISON_PRESETS: [&str; 8] = [
    "svm-left-pca",
    "gbt-pca",
    "lstm-mif",
    "lstm-raw-all",
    "lstm-raw-mif",
    "bilstm-mif",
    "bilstm-raw-all",
    "bilstm-raw-mif",
];

pub const PRESETS: [&str; 13] = [
    "svm-left-pca",
    "gbt-pca",
    "lstm-mif",
    "lstm-raw-all",
    "lstm-raw-mif",
    "bilstm-mif",
    "bilstm-raw-all",
    "bilstm-raw-mif",
    "binary-svm-gain",
    "binary-gbt-pca",
    "synth-bilstm",
    "synth-svm",
    "synth-gbt",
];
