use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{input_name, DatasetSource, PipelineConfig, Selection, Task};
use super::learners::{gain_provenance, FeatureLearner, FittedFeatureModel, FittedNetwork, RawLearner};
use super::{PipelineError, Result};
use crate::data::{load_epochset, split_rest_action, DataError, EpochSet, Interval};
use crate::dsp::{clip_bands, PreprocessProfile};
use crate::eval::{
    emit_report, epoch_fingerprints, nested_cv, windowed_rest_action, CvOutcome, CvTask, EvalReport, SubjectReport,
    SubjectRow, WindowRow,
};
use crate::features::{build_feature_matrix, FeatureMatrix, FeatureParams, Provenance};
use crate::neural::InputKind;
use crate::synth::{default_4class_spec, generate, generate_trials, SynthSpec};

pub const CACHE_ENV: &str = "INNERSPEECH_CACHE";

/// Epochs for the configured task, one set per subject, before preprocessing.
pub fn load_subjects(config: &PipelineConfig) -> Result<Vec<EpochSet>> {
    let synth = |spec: &SynthSpec| -> Result<EpochSet> {
        Ok(match config.task {
            Task::MulticlassWords => generate(spec)?,
            Task::BinaryRestAction => {
                let trials = generate_trials(spec, config.intervals.rest_s)?;
                split_rest_action(&trials, config.intervals.rest_s, config.intervals.action_s)?
            }
        })
    };
    match &config.dataset {
        DatasetSource::Files { paths } => paths
            .iter()
            .map(|p| task_epochs(&load_epochset(p)?, config.task))
            .collect(),
        DatasetSource::Synth { spec } => Ok(vec![synth(spec)?]),
        DatasetSource::SynthDefault { snr, seed } => Ok(vec![synth(&default_4class_spec(*snr, *seed))?]),
    }
}

/// Relabels a stored set for the task: word epochs keep their labels; the
/// binary task maps rest epochs to 0 and action epochs to 1.
pub fn task_epochs(set: &EpochSet, task: Task) -> Result<EpochSet> {
    let is = |iv: &Interval, want: &Interval| std::mem::discriminant(iv) == std::mem::discriminant(want);
    match task {
        Task::MulticlassWords => {
            if set.epochs().iter().all(|e| is(&e.interval, &Interval::Action)) {
                return Ok(set.clone());
            }
            let keep: Vec<usize> = (0..set.len()).filter(|&i| is(&set.epochs()[i].interval, &Interval::Action)).collect();
            Ok(set.subset(&keep))
        }
        Task::BinaryRestAction => {
            if set.class_names() == ["rest", "action"] {
                return Ok(set.clone());
            }
            let epochs: Vec<_> = set
                .epochs()
                .iter()
                .filter_map(|e| {
                    let label = match e.interval {
                        Interval::Rest => 0,
                        Interval::Action => 1,
                        Interval::Window { .. } => return None,
                    };
                    let mut e = e.clone();
                    e.label = label;
                    Some(e)
                })
                .collect();
            let out = EpochSet::new(
                epochs,
                set.sampling_rate_hz(),
                vec!["rest".into(), "action".into()],
                set.channels().to_vec(),
                set.n_timesteps(),
                set.subject_id.clone(),
                set.condition.clone(),
            )?;
            if out.class_counts().contains(&0) {
                return Err(DataError::Invalid(format!("subject {} lacks rest or action epochs", set.subject_id)).into());
            }
            Ok(out)
        }
    }
}

pub fn preprocess(config: &PipelineConfig, set: &EpochSet) -> Result<EpochSet> {
    match &config.profile {
        Some(name) => {
            let profile = PreprocessProfile::preset(name)
                .ok_or_else(|| PipelineError::ConfigInvalid(format!("unknown profile {name}")))?;
            Ok(profile.apply(set)?)
        }
        None => Ok(set.clone()),
    }
}

/// Band definitions clipped to what survives preprocessing and sampling.
pub fn feature_params(config: &PipelineConfig, fs_in: f64) -> FeatureParams {
    let limit = config
        .profile
        .as_deref()
        .and_then(PreprocessProfile::preset)
        .map_or(fs_in / 2.0, |p| p.passband_limit_hz(fs_in));
    FeatureParams { bands: clip_bands(&config.features.bands, limit), ..config.features.clone() }
}

fn cache_key(config: &PipelineConfig, subject: usize) -> Result<String> {
    let mut h = Sha256::new();
    let entry = match &config.dataset {
        DatasetSource::Files { paths } => {
            let (json, tensor) = crate::data::file_pair(&paths[subject]);
            let io = |p: &Path| {
                let p = p.display().to_string();
                move |source| PipelineError::Io { path: p, source }
            };
            let mut s = std::fs::read_to_string(&json).map_err(io(&json))?;
            s.push_str(&std::fs::metadata(&tensor).map_err(io(&tensor))?.len().to_string());
            s
        }
        other => serde_json::to_string(other).expect("dataset serializes"),
    };
    h.update(entry.as_bytes());
    let rest = serde_json::json!({
        "profile": config.profile,
        "task": config.task,
        "features": config.features,
        "intervals": config.intervals,
    });
    h.update(rest.to_string().as_bytes());
    Ok(hex::encode(h.finalize()))
}

/// Band-power features of a preprocessed subject set, read from and written
/// to the directory in `INNERSPEECH_CACHE` when it is set.
pub fn subject_features(config: &PipelineConfig, raw_fs: f64, set: &EpochSet, subject: usize) -> Result<FeatureMatrix<f64>> {
    let params = feature_params(config, raw_fs);
    let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    let path = match &cache {
        Some(dir) => Some(dir.join(format!("features-{}.json", cache_key(config, subject)?))),
        None => None,
    };
    if let Some(p) = &path {
        if let Ok(text) = std::fs::read_to_string(p) {
            match serde_json::from_str::<FeatureMatrix<f64>>(&text) {
                Ok(m) if m.n_rows() == set.len() => {
                    log::debug!("feature cache hit {}", p.display());
                    return Ok(m);
                }
                _ => log::warn!("ignoring unreadable feature cache {}", p.display()),
            }
        }
    }
    let m: FeatureMatrix<f64> = build_feature_matrix(set, &params)?;
    if let Some(p) = &path {
        let io = |source| PipelineError::Io { path: p.display().to_string(), source };
        std::fs::create_dir_all(p.parent().expect("cache file has a parent")).map_err(io)?;
        std::fs::write(p, serde_json::to_string(&m).expect("matrix serializes")).map_err(io)?;
    }
    Ok(m)
}

/// Preprocessed subjects with their features where the configuration needs them.
pub struct Prepared {
    pub sets: Vec<EpochSet>,
    pub features: Vec<Option<FeatureMatrix<f64>>>,
    pub n_classes: usize,
}

pub fn prepare(config: &PipelineConfig) -> Result<Prepared> {
    config.validate()?;
    let raw = load_subjects(config)?;
    let n_classes = raw.first().map(EpochSet::n_classes).unwrap_or(0);
    if let Some(s) = raw.iter().find(|s| s.n_classes() != n_classes) {
        return Err(DataError::Invalid(format!("subject {} has {} classes, expected {n_classes}", s.subject_id, s.n_classes())).into());
    }
    let needs_features = config.input != InputKind::RawAll || config.windows.is_some();
    let done = raw
        .par_iter()
        .enumerate()
        .map(|(i, set)| {
            let pre = preprocess(config, set)?;
            let feats =
                if needs_features { Some(subject_features(config, set.sampling_rate_hz(), &pre, i)?) } else { None };
            Ok((pre, feats))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sets, features) = done.into_iter().unzip();
    Ok(Prepared { sets, features, n_classes })
}

/// Full-data gain selection of every subject, for the intersecting step.
fn subject_selections(config: &PipelineConfig, prepared: &Prepared) -> Result<Vec<BTreeSet<Provenance>>> {
    let Some(threshold) = config.selection.iter().find_map(|s| match s {
        Selection::GainIntersect { threshold } => Some(*threshold),
        _ => None,
    }) else {
        return Ok(vec![]);
    };
    prepared
        .features
        .par_iter()
        .map(|m| gain_provenance(m.as_ref().expect("features prepared"), &config.hyper, threshold))
        .collect()
}

fn subject_name(set: &EpochSet, i: usize) -> String {
    if set.subject_id.is_empty() {
        format!("subject{}", i + 1)
    } else {
        set.subject_id.clone()
    }
}

/// Cross-validated evaluation of every subject.
pub fn evaluate(config: &PipelineConfig) -> Result<EvalReport> {
    let prepared = prepare(config)?;
    let selections = subject_selections(config, &prepared)?;
    let grid = config.grid_points();
    let cv = config.cv();
    let subjects = (0..prepared.sets.len())
        .into_par_iter()
        .map(|i| {
            let set = &prepared.sets[i];
            // the intersecting step sees only the other subjects' selections
            let others: Vec<_> = selections.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| s.clone()).collect();
            let labels = set.labels();
            let fingerprints = epoch_fingerprints(set);
            let task = CvTask { labels: &labels, n_classes: prepared.n_classes, fingerprints: Some(&fingerprints) };
            let outcome: CvOutcome<_> = match config.input {
                InputKind::PsdFeatures => {
                    let learner = FeatureLearner {
                        matrix: prepared.features[i].as_ref().expect("features prepared"),
                        classifier: config.classifier,
                        steps: &config.selection,
                        others: &others,
                        n_classes: prepared.n_classes,
                    };
                    nested_cv(&learner, task, &grid, &cv)?
                }
                InputKind::RawAll | InputKind::RawSelected => {
                    let learner = RawLearner {
                        set,
                        features: prepared.features[i].as_ref(),
                        classifier: config.classifier,
                        input: config.input,
                        steps: &config.selection,
                        others: &others,
                    };
                    nested_cv(&learner, task, &grid, &cv)?
                }
            };
            let chosen = outcome
                .folds
                .iter()
                .map(|f| match config.grid.get(f.hyper_index) {
                    Some(o) => serde_json::to_value(o).expect("override serializes"),
                    None => serde_json::Value::String("base".into()),
                })
                .collect();
            Ok(SubjectReport {
                row: SubjectRow::from_metrics(subject_name(set, i), &outcome.metrics),
                folds: outcome.folds.into_iter().map(|f| f.metrics).collect(),
                chosen,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = EvalReport::new(
        config.classifier.name(),
        input_name(config.input),
        prepared.n_classes,
        config.fingerprint(),
        config.seed,
        subjects,
    )?;
    if let Some(w) = &config.windows {
        report.windows = window_rows(config, &prepared, &selections, w.width_s, w.overlap)?;
    }
    Ok(report)
}

/// Rest-versus-window SVM accuracy per window position, averaged over subjects.
fn window_rows(
    config: &PipelineConfig,
    prepared: &Prepared,
    selections: &[BTreeSet<Provenance>],
    width_s: f64,
    overlap: f64,
) -> Result<Vec<WindowRow>> {
    let cv = crate::eval::CvConfig { outer_k: config.cv().outer_k, ..config.cv() };
    let per_subject = prepared
        .sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let others: Vec<_> = selections.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| s.clone()).collect();
            let params = feature_params(config, set.sampling_rate_hz());
            let rows = windowed_rest_action(
                set,
                width_s,
                overlap,
                &params,
                |m| OwnedFeatureLearner { matrix: m, steps: config.selection.clone(), others: others.clone() },
                &config.hyper,
                &cv,
            )?;
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_subject.iter().map(Vec::len).min().unwrap_or(0);
    Ok((0..n)
        .map(|p| WindowRow {
            window_start_s: per_subject[0][p].window_start_s,
            accuracy: per_subject.iter().map(|r| r[p].accuracy).sum::<f64>() / per_subject.len() as f64,
        })
        .collect())
}

/// SVM on window features; owns its matrix so each window position builds its own.
struct OwnedFeatureLearner {
    matrix: FeatureMatrix<f64>,
    steps: Vec<Selection>,
    others: Vec<BTreeSet<Provenance>>,
}

impl crate::eval::Learner for OwnedFeatureLearner {
    type Hyper = super::config::ModelHyper;

    fn fit_predict(
        &self,
        train: &[usize],
        test: &[usize],
        hyper: &Self::Hyper,
        seed: u64,
    ) -> std::result::Result<Vec<usize>, crate::eval::BoxError> {
        let inner = FeatureLearner {
            matrix: &self.matrix,
            classifier: super::config::Classifier::Svm,
            steps: &self.steps,
            others: &self.others,
            n_classes: 2,
        };
        inner.fit_predict(train, test, hyper, seed)
    }
}

pub struct RunOutput {
    pub report: EvalReport,
    pub written: Vec<PathBuf>,
}

/// Evaluate and write the report files plus the resolved configuration.
pub fn run(config: &PipelineConfig) -> Result<RunOutput> {
    let report = evaluate(config)?;
    let mut written = emit_report(&report, &config.output_dir)?;
    let path = config.output_dir.join("config.json");
    std::fs::write(&path, config.to_json() + "\n").map_err(|source| PipelineError::Io { path: path.display().to_string(), source })?;
    written.push(path);
    Ok(RunOutput { report, written })
}

/// A classifier fitted on every epoch of one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Features { model: FittedFeatureModel },
    Raw { network: FittedNetwork },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSubject {
    pub subject: String,
    pub fingerprint: String,
    pub seed: u64,
    pub model: TrainedModel,
}

/// Fit the configured model on all epochs of each subject with the base
/// hyperparameters (no search).
pub fn train_models(config: &PipelineConfig) -> Result<Vec<TrainedSubject>> {
    let prepared = prepare(config)?;
    let selections = subject_selections(config, &prepared)?;
    (0..prepared.sets.len())
        .into_par_iter()
        .map(|i| {
            let set = &prepared.sets[i];
            let others: Vec<_> = selections.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| s.clone()).collect();
            let all: Vec<usize> = (0..set.len()).collect();
            let model = match config.input {
                InputKind::PsdFeatures => TrainedModel::Features {
                    model: FeatureLearner {
                        matrix: prepared.features[i].as_ref().expect("features prepared"),
                        classifier: config.classifier,
                        steps: &config.selection,
                        others: &others,
                        n_classes: prepared.n_classes,
                    }
                    .fit(&all, &config.hyper, config.seed)?,
                },
                InputKind::RawAll | InputKind::RawSelected => TrainedModel::Raw {
                    network: RawLearner {
                        set,
                        features: prepared.features[i].as_ref(),
                        classifier: config.classifier,
                        input: config.input,
                        steps: &config.selection,
                        others: &others,
                    }
                    .fit(&all, &config.hyper, config.seed)?,
                },
            };
            Ok(TrainedSubject { subject: subject_name(set, i), fingerprint: config.fingerprint(), seed: config.seed, model })
        })
        .collect()
}
