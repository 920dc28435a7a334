use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Result};
use crate::dsp::PreprocessProfile;
use crate::eval::CvConfig;
use crate::features::FeatureParams;
use crate::neural::{Front, InputKind, NetworkSpec, TrainConfig};
use crate::shallow::{GammaSpec, GbtParams, KernelSpec, SvmParams};
use crate::synth::SynthSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Canonical EpochSet files, one subject each.
    Files { paths: Vec<PathBuf> },
    Synth { spec: SynthSpec },
    /// The four-class generator at a given signal-to-noise ratio.
    SynthDefault { snr: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    BinaryRestAction,
    MulticlassWords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    Svm,
    Gbt,
    Lstm,
    Bilstm,
}

impl Classifier {
    pub fn is_neural(self) -> bool {
        matches!(self, Classifier::Lstm | Classifier::Bilstm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Classifier::Svm => "svm",
            Classifier::Gbt => "gbt",
            Classifier::Lstm => "lstm",
            Classifier::Bilstm => "bilstm",
        }
    }
}

pub fn input_name(kind: InputKind) -> &'static str {
    match kind {
        InputKind::PsdFeatures => "psd_features",
        InputKind::RawAll => "raw_all",
        InputKind::RawSelected => "raw_selected",
    }
}

/// One feature-selection step; steps run in order inside each training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    Pca { variance: f64 },
    Gain { threshold: f64 },
    /// Gain selection intersected with the selections of the other subjects.
    GainIntersect { threshold: f64 },
    LeftHemisphere,
}

impl Selection {
    fn picks_channels(&self) -> bool {
        !matches!(self, Selection::Pca { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalScheme {
    Kfold { k: usize },
    Nested { outer: usize, inner: usize },
}

/// Recurrent width, dense widths and dropout rates of the network head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkHyper {
    pub hidden: usize,
    pub dense: [usize; 2],
    pub dropout: [f64; 2],
}

impl Default for NetworkHyper {
    fn default() -> Self {
        Self { hidden: 64, dense: [64, 32], dropout: [0.4, 0.4] }
    }
}

impl NetworkHyper {
    pub fn spec(&self, classifier: Classifier, input_dim: usize, n_classes: usize) -> NetworkSpec {
        let front = match classifier {
            Classifier::Lstm => Front::Lstm { hidden: self.hidden },
            _ => Front::BiLstm { hidden: self.hidden },
        };
        NetworkSpec { input_dim, front, dense: self.dense, n_classes, dropout: self.dropout }
    }
}

/// Every model hyperparameter the pipeline may touch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelHyper {
    pub svm: SvmParams,
    pub gbt: GbtParams,
    pub network: NetworkHyper,
    pub train: TrainConfig,
    /// Share of each training fold held out for early stopping.
    pub val_fraction: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            svm: SvmParams::default(),
            gbt: GbtParams::default(),
            network: NetworkHyper::default(),
            train: TrainConfig::default(),
            val_fraction: 0.15,
        }
    }
}

/// Grid point for nested CV: fields left out keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperOverride {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gbt_learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
}

impl HyperOverride {
    pub fn apply(&self, base: &ModelHyper) -> ModelHyper {
        let mut h = base.clone();
        if let Some(c) = self.c {
            h.svm.c = c;
        }
        if let Some(g) = self.gamma {
            h.svm.kernel = KernelSpec::Rbf { gamma: GammaSpec::Value(g) };
        }
        if let Some(n) = self.n_rounds {
            h.gbt.n_rounds = n;
        }
        if let Some(d) = self.max_depth {
            h.gbt.max_depth = d;
        }
        if let Some(lr) = self.gbt_learning_rate {
            h.gbt.learning_rate = lr;
        }
        if let Some(lr) = self.learning_rate {
            h.train.learning_rate = lr;
        }
        if let Some(hd) = self.hidden {
            h.network.hidden = hd;
        }
        h
    }
}

/// Rest and action spans cut from synthetic trials for the binary task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervals {
    pub rest_s: f64,
    pub action_s: f64,
}

impl Default for Intervals {
    fn default() -> Self {
        Self { rest_s: 1.5, action_s: 2.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAnalysis {
    pub width_s: f64,
    pub overlap: f64,
}

/// A complete experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dataset: DatasetSource,
    /// Preprocessing profile name; absent means the epochs are used as stored.
    #[serde(default)]
    pub profile: Option<String>,
    pub task: Task,
    pub input: InputKind,
    pub classifier: Classifier,
    #[serde(default)]
    pub selection: Vec<Selection>,
    pub eval: EvalScheme,
    #[serde(default = "yes")]
    pub stratified: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub features: FeatureParams,
    #[serde(default)]
    pub hyper: ModelHyper,
    /// Nested-CV search space as overrides of `hyper`.
    #[serde(default)]
    pub grid: Vec<HyperOverride>,
    #[serde(default)]
    pub intervals: Intervals,
    /// Rest-versus-window SVM analysis of the action interval (binary task).
    #[serde(default)]
    pub windows: Option<WindowAnalysis>,
}

fn yes() -> bool {
    true
}

impl PipelineConfig {
    /// Static checks that need no data: regime and classifier compatibility,
    /// selection shape, fold counts, profile name, hyperparameters, and the
    /// presence of every dataset file.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::ConfigInvalid(m));
        let raw = matches!(self.input, InputKind::RawAll | InputKind::RawSelected);
        if raw && !self.classifier.is_neural() {
            return bad(format!("{} input needs lstm or bilstm, not {}", input_name(self.input), self.classifier.name()));
        }
        if raw && self.task == Task::BinaryRestAction {
            return bad("raw input needs equal-length epochs; the rest/action task mixes lengths".into());
        }
        if self.input == InputKind::RawAll && !self.selection.is_empty() {
            return bad("raw_all takes every channel; drop the selection steps".into());
        }
        if self.input == InputKind::RawSelected {
            if self.selection.is_empty() {
                return bad("raw_selected needs a channel-selecting step (gain, gain_intersect, left_hemisphere)".into());
            }
            if self.selection.iter().any(|s| !s.picks_channels()) {
                return bad("pca components do not map to channels; not usable with raw_selected".into());
            }
        }
        for (i, s) in self.selection.iter().enumerate() {
            match *s {
                Selection::Pca { variance } if !(variance > 0.0 && variance <= 1.0) => {
                    return bad(format!("pca variance {variance} outside (0, 1]"))
                }
                Selection::Gain { threshold } | Selection::GainIntersect { threshold }
                    if !(threshold > 0.0 && threshold <= 1.0) =>
                {
                    return bad(format!("gain threshold {threshold} outside (0, 1]"))
                }
                Selection::LeftHemisphere | Selection::Gain { .. } | Selection::GainIntersect { .. }
                    if self.selection[..i].iter().any(|p| matches!(p, Selection::Pca { .. })) =>
                {
                    return bad("channel-based selection after pca".into())
                }
                _ => {}
            }
        }
        match self.eval {
            EvalScheme::Kfold { k } if k < 2 => return bad(format!("kfold k = {k}")),
            EvalScheme::Nested { outer, inner } if outer < 2 || inner < 2 => {
                return bad(format!("nested {outer}x{inner}"))
            }
            EvalScheme::Kfold { .. } if self.grid.len() > 1 => {
                return bad("a hyperparameter grid needs nested evaluation".into())
            }
            _ => {}
        }
        if let Some(p) = &self.profile {
            if PreprocessProfile::preset(p).is_none() {
                return bad(format!("unknown profile {p}; known: {}", PreprocessProfile::PRESETS.join(", ")));
            }
        }
        if self.windows.is_some() && self.task != Task::BinaryRestAction {
            return bad("window analysis belongs to the rest/action task".into());
        }
        if let Some(w) = &self.windows {
            if !(w.width_s > 0.0 && (0.0..1.0).contains(&w.overlap)) {
                return bad(format!("window {} s with overlap {}", w.width_s, w.overlap));
            }
        }
        if !(self.hyper.val_fraction > 0.0 && self.hyper.val_fraction < 0.5) {
            return bad(format!("val_fraction {}", self.hyper.val_fraction));
        }
        for h in self.grid_points() {
            h.train.validate().map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
            if self.classifier.is_neural() {
                h.network.spec(self.classifier, 1, 2).validate().map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?;
            }
        }
        match &self.dataset {
            DatasetSource::Files { paths } => {
                if paths.is_empty() {
                    return bad("no dataset files".into());
                }
                for p in paths {
                    let (json, tensor) = crate::data::file_pair(p);
                    for f in [json, tensor] {
                        if !f.is_file() {
                            return bad(format!("dataset file {} does not exist", f.display()));
                        }
                    }
                }
            }
            DatasetSource::Synth { spec } => spec.validate().map_err(|e| PipelineError::ConfigInvalid(e.to_string()))?,
            DatasetSource::SynthDefault { snr, .. } => {
                if !(*snr >= 0.0 && snr.is_finite()) {
                    return bad(format!("snr {snr}"));
                }
            }
        }
        Ok(())
    }

    /// The resolved hyperparameters for each grid entry (the base alone when the grid is empty).
    pub fn grid_points(&self) -> Vec<ModelHyper> {
        if self.grid.is_empty() {
            vec![self.hyper.clone()]
        } else {
            self.grid.iter().map(|o| o.apply(&self.hyper)).collect()
        }
    }

    pub fn cv(&self) -> CvConfig {
        let (outer_k, inner_k) = match self.eval {
            EvalScheme::Kfold { k } => (k, 3),
            EvalScheme::Nested { outer, inner } => (outer, inner),
        };
        CvConfig { outer_k, inner_k, stratified: self.stratified, seed: self.seed }
    }

    /// SHA-256 of the canonical JSON of every field except the output location.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
