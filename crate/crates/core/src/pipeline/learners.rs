use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Classifier, ModelHyper, Selection};
use super::{PipelineError, Result};
use crate::data::{EpochSet, Hemisphere};
use crate::eval::{BoxError, Learner};
use crate::features::{pca_fit, FeatureMatrix, PcaModel, Provenance, Standardizer};
use crate::neural::{
    forward, shape_input, train, ChannelNormalizer, InputKind, InputSource, Mode, ModelArtifact, SequenceBatch,
    TrainConfig,
};
use crate::shallow::{gbt_importances, gbt_train, svm_train, ShallowModel};

/// A selection step after fitting on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedStep {
    /// Keep these columns, identified by provenance.
    Columns { keep: Vec<Provenance> },
    Pca { model: PcaModel<f64> },
}

impl FittedStep {
    pub fn apply(&self, m: &FeatureMatrix<f64>) -> Result<FeatureMatrix<f64>> {
        match self {
            FittedStep::Columns { keep } => {
                let keep: BTreeSet<&Provenance> = keep.iter().collect();
                let cols: Vec<usize> = (0..m.n_cols()).filter(|&c| keep.contains(&m.provenance()[c])).collect();
                if cols.len() != keep.len() {
                    return Err(PipelineError::EmptySelection("selected columns missing from the matrix".into()));
                }
                Ok(m.select_columns(&cols))
            }
            FittedStep::Pca { model } => Ok(model.transform(m)?),
        }
    }
}

pub fn apply_steps(steps: &[FittedStep], m: &FeatureMatrix<f64>) -> Result<FeatureMatrix<f64>> {
    steps.iter().try_fold(m.clone(), |acc, s| s.apply(&acc))
}

fn is_left(name: &str) -> bool {
    Hemisphere::from_label(name) == Hemisphere::Left
}

/// Fit every step on `train`, returning the fitted steps and the reduced
/// training matrix. `others` holds the gain selections of the other
/// subjects, used by the intersecting step.
pub fn fit_steps(
    steps: &[Selection],
    train: &FeatureMatrix<f64>,
    hyper: &ModelHyper,
    others: &[BTreeSet<Provenance>],
) -> Result<(Vec<FittedStep>, FeatureMatrix<f64>)> {
    let mut fitted = Vec::with_capacity(steps.len());
    let mut m = train.clone();
    for step in steps {
        let f = match *step {
            Selection::LeftHemisphere => {
                let kept = m.select_channel_columns(is_left)?;
                FittedStep::Columns { keep: kept.provenance().to_vec() }
            }
            Selection::Pca { variance } => FittedStep::Pca { model: pca_fit(&m, variance)? },
            Selection::Gain { threshold } => {
                FittedStep::Columns { keep: gain_provenance(&m, hyper, threshold)?.into_iter().collect() }
            }
            Selection::GainIntersect { threshold } => {
                let own = gain_provenance(&m, hyper, threshold)?;
                let keep: Vec<Provenance> =
                    m.provenance().iter().filter(|p| own.contains(p) && others.iter().all(|o| o.contains(p))).cloned().collect();
                if keep.is_empty() {
                    log::warn!("no feature is selected for every subject");
                }
                FittedStep::Columns { keep }
            }
        };
        let next = f.apply(&m)?;
        if next.n_cols() == 0 {
            return Err(PipelineError::EmptySelection(format!("{step:?} kept no features")));
        }
        m = next;
        fitted.push(f);
    }
    Ok((fitted, m))
}

/// Provenance of the columns a boosted model credits with `threshold` of its gain.
pub fn gain_provenance(m: &FeatureMatrix<f64>, hyper: &ModelHyper, threshold: f64) -> Result<BTreeSet<Provenance>> {
    let selected = gbt_importances(&gbt_train(m, &hyper.gbt)?, threshold)?.selected;
    Ok(selected.into_iter().map(|c| m.provenance()[c].clone()).collect())
}

/// Stratified holdout: `fraction` of each class (at least one member when
/// the class has two or more).
pub fn holdout(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut held = Vec::new();
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        let take = if members.len() >= 2 { ((members.len() as f64 * fraction).round() as usize).max(1) } else { 0 };
        held.extend_from_slice(&members[..take]);
    }
    held.sort_unstable();
    let fit = (0..labels.len()).filter(|i| held.binary_search(i).is_err()).collect();
    (fit, held)
}

/// A trained network with the input preparation it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedNetwork {
    pub artifact: ModelArtifact,
    pub best_epoch: usize,
}

impl FittedNetwork {
    pub fn predict(&self, batch: &SequenceBatch<f32>) -> Result<Vec<usize>> {
        let batch = match &self.artifact.normalizer {
            Some(n) => n.apply(batch)?,
            None => batch.clone(),
        };
        let probs = forward(&self.artifact.spec, &self.artifact.params, &batch, Mode::Eval)?;
        Ok(probs.iter().map(|p| argmax(p)).collect())
    }
}

fn argmax(p: &[f32]) -> usize {
    (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b })
}

/// Early-stopped training on a stratified split of `batch`.
pub fn fit_network(
    classifier: Classifier,
    hyper: &ModelHyper,
    batch: &SequenceBatch<f32>,
    input_kind: InputKind,
    channels: Option<Vec<String>>,
    normalize: bool,
    seed: u64,
) -> Result<FittedNetwork> {
    let normalizer = normalize.then(|| ChannelNormalizer::fit(batch));
    let prepared = match &normalizer {
        Some(n) => n.apply(batch)?,
        None => batch.clone(),
    };
    let (fit_idx, val_idx) = holdout(&prepared.labels, hyper.val_fraction, seed ^ 0x7a1);
    if val_idx.is_empty() || fit_idx.is_empty() {
        return Err(PipelineError::EmptySelection("too few sequences for a validation split".into()));
    }
    let spec = hyper.network.spec(classifier, batch.features, batch.n_classes);
    let config = TrainConfig { seed, ..hyper.train.clone() };
    let out = train(&spec, &prepared.subset(&fit_idx), &prepared.subset(&val_idx), &config)?;
    log::debug!("network trained; best epoch {} of {}", out.best_epoch, out.history.len());
    Ok(FittedNetwork {
        artifact: ModelArtifact { spec, input_kind, channels, normalizer, params: out.params },
        best_epoch: out.best_epoch,
    })
}

/// Final classifier on reduced features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedHead {
    Shallow { scaler: Option<Standardizer<f64>>, model: ShallowModel },
    Network { scaler: Standardizer<f64>, network: FittedNetwork },
}

/// Selection steps plus a classifier on the band-power features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFeatureModel {
    pub steps: Vec<FittedStep>,
    pub head: FittedHead,
}

impl FittedFeatureModel {
    pub fn predict(&self, m: &FeatureMatrix<f64>) -> Result<Vec<usize>> {
        let x = apply_steps(&self.steps, m)?;
        match &self.head {
            FittedHead::Shallow { scaler, model } => {
                let x = match scaler {
                    Some(s) => s.transform(&x)?,
                    None => x,
                };
                Ok(model.predict(&x)?)
            }
            FittedHead::Network { scaler, network } => {
                let x = scaler.transform(&x)?;
                let n_classes = network.artifact.spec.n_classes;
                let x32 = to_f32(&x);
                let batch = shape_input(InputKind::PsdFeatures, InputSource::Features { matrix: &x32, n_classes })?;
                network.predict(&batch)
            }
        }
    }
}

fn to_f32(m: &FeatureMatrix<f64>) -> FeatureMatrix<f32> {
    FeatureMatrix::new(
        m.values().iter().map(|&v| v as f32).collect(),
        m.n_rows(),
        m.provenance().to_vec(),
        m.labels().to_vec(),
    )
    .expect("same shape")
}

/// Band-power features through selection steps into SVM, boosted trees or a
/// recurrent network reading the features as a sequence.
pub struct FeatureLearner<'a> {
    pub matrix: &'a FeatureMatrix<f64>,
    pub classifier: Classifier,
    pub steps: &'a [Selection],
    pub others: &'a [BTreeSet<Provenance>],
    pub n_classes: usize,
}

impl FeatureLearner<'_> {
    pub fn fit(&self, train_rows: &[usize], hyper: &ModelHyper, seed: u64) -> Result<FittedFeatureModel> {
        let tr = self.matrix.subset_rows(train_rows);
        let (steps, x) = fit_steps(self.steps, &tr, hyper, self.others)?;
        let head = match self.classifier {
            Classifier::Svm => {
                let scaler = Standardizer::fit(&x);
                let model = ShallowModel::Svm(svm_train(&scaler.transform(&x)?, &hyper.svm)?);
                FittedHead::Shallow { scaler: Some(scaler), model }
            }
            Classifier::Gbt => FittedHead::Shallow { scaler: None, model: ShallowModel::Gbt(gbt_train(&x, &hyper.gbt)?) },
            Classifier::Lstm | Classifier::Bilstm => {
                let scaler = Standardizer::fit(&x);
                let x32 = to_f32(&scaler.transform(&x)?);
                let batch = shape_input(
                    InputKind::PsdFeatures,
                    InputSource::Features { matrix: &x32, n_classes: self.n_classes },
                )?;
                let network = fit_network(self.classifier, hyper, &batch, InputKind::PsdFeatures, None, false, seed)?;
                FittedHead::Network { scaler, network }
            }
        };
        Ok(FittedFeatureModel { steps, head })
    }
}

impl Learner for FeatureLearner<'_> {
    type Hyper = ModelHyper;

    fn fit_predict(&self, train: &[usize], test: &[usize], hyper: &ModelHyper, seed: u64) -> std::result::Result<Vec<usize>, BoxError> {
        let model = self.fit(train, hyper, seed)?;
        Ok(model.predict(&self.matrix.subset_rows(test))?)
    }
}

/// Raw multichannel epochs into a recurrent network; for `raw_selected`
/// the channels come from selection steps fitted on the band-power
/// features of the training epochs.
pub struct RawLearner<'a> {
    pub set: &'a EpochSet,
    pub features: Option<&'a FeatureMatrix<f64>>,
    pub classifier: Classifier,
    pub input: InputKind,
    pub steps: &'a [Selection],
    pub others: &'a [BTreeSet<Provenance>],
}

impl RawLearner<'_> {
    /// Channels for a training subset, in montage order.
    pub fn channels(&self, train_rows: &[usize], hyper: &ModelHyper) -> Result<Option<Vec<String>>> {
        if self.input == InputKind::RawAll {
            return Ok(None);
        }
        let features = self.features.ok_or_else(|| {
            PipelineError::ConfigInvalid("raw_selected needs band-power features to pick channels".into())
        })?;
        let (_, x) = fit_steps(self.steps, &features.subset_rows(train_rows), hyper, self.others)?;
        let picked: BTreeSet<String> = x
            .provenance()
            .iter()
            .filter_map(|p| match p {
                Provenance::ChannelBand { channel, .. } => Some(channel.clone()),
                Provenance::Component { .. } => None,
            })
            .collect();
        Ok(Some(self.set.channels().iter().map(|c| c.name.clone()).filter(|n| picked.contains(n)).collect()))
    }

    pub fn batch(&self, rows: &[usize], channels: Option<&[String]>) -> Result<SequenceBatch<f32>> {
        let subset = self.set.subset(rows);
        Ok(shape_input(self.input, InputSource::Epochs { set: &subset, channels })?)
    }

    pub fn fit(&self, train_rows: &[usize], hyper: &ModelHyper, seed: u64) -> Result<FittedNetwork> {
        let channels = self.channels(train_rows, hyper)?;
        let batch = self.batch(train_rows, channels.as_deref())?;
        fit_network(self.classifier, hyper, &batch, self.input, channels, true, seed)
    }
}

impl Learner for RawLearner<'_> {
    type Hyper = ModelHyper;

    fn fit_predict(&self, train: &[usize], test: &[usize], hyper: &ModelHyper, seed: u64) -> std::result::Result<Vec<usize>, BoxError> {
        let net = self.fit(train, hyper, seed)?;
        let batch = self.batch(test, net.artifact.channels.as_deref())?;
        Ok(net.predict(&batch)?)
    }
}
