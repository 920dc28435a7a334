use serde::{Deserialize, Serialize};

use super::{NeuralError, Result};
use crate::data::EpochSet;
use crate::features::FeatureMatrix;
use crate::scalar::Real;

/// `batch × timesteps × features` tensor (time-major within each sequence)
/// with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch<T> {
    pub data: Vec<T>,
    pub batch: usize,
    pub timesteps: usize,
    pub features: usize,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl<T: Real> SequenceBatch<T> {
    pub fn new(data: Vec<T>, batch: usize, timesteps: usize, features: usize, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if data.len() != batch * timesteps * features {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} values for {batch}×{timesteps}×{features}",
                data.len()
            )));
        }
        if labels.len() != batch {
            return Err(NeuralError::ShapeMismatch(format!("{} labels for {batch} sequences", labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(NeuralError::ShapeMismatch(format!("label {l} with {n_classes} classes")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::ShapeMismatch("non-finite input value".into()));
        }
        Ok(Self { data, batch, timesteps, features, labels, n_classes })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.timesteps, self.features)
    }

    pub fn sequence(&self, b: usize) -> &[T] {
        let n = self.timesteps * self.features;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn one_hot(&self) -> Vec<Vec<T>> {
        self.labels
            .iter()
            .map(|&l| (0..self.n_classes).map(|c| if c == l { T::one() } else { T::zero() }).collect())
            .collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let data = idx.iter().flat_map(|&b| self.sequence(b).iter().copied()).collect();
        Self {
            data,
            batch: idx.len(),
            timesteps: self.timesteps,
            features: self.features,
            labels: idx.iter().map(|&b| self.labels[b]).collect(),
            n_classes: self.n_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Feature vector read as a sequence of scalars.
    PsdFeatures,
    RawAll,
    RawSelected,
}

pub enum InputSource<'a, T> {
    Features { matrix: &'a FeatureMatrix<T>, n_classes: usize },
    Epochs { set: &'a EpochSet, channels: Option<&'a [String]> },
}

/// Arrange features or raw epochs as a sequence batch: raw kinds give
/// `timesteps × channels`, the feature kind `n_features × 1`.
pub fn shape_input<T: Real>(kind: InputKind, source: InputSource<'_, T>) -> Result<SequenceBatch<T>> {
    match (kind, source) {
        (InputKind::PsdFeatures, InputSource::Features { matrix, n_classes }) => SequenceBatch::new(
            matrix.values().to_vec(),
            matrix.n_rows(),
            matrix.n_cols(),
            1,
            matrix.labels().to_vec(),
            n_classes,
        ),
        (InputKind::RawAll, InputSource::Epochs { set, channels: None }) => {
            raw(set, &(0..set.n_channels()).collect::<Vec<_>>())
        }
        (InputKind::RawSelected, InputSource::Epochs { set, channels: Some(names) }) => {
            if names.is_empty() {
                return Err(NeuralError::KindMismatch("raw_selected with no channels".into()));
            }
            let idx = names
                .iter()
                .map(|n| {
                    set.channels()
                        .iter()
                        .position(|c| &c.name == n)
                        .ok_or_else(|| NeuralError::KindMismatch(format!("channel {n} not in the montage")))
                })
                .collect::<Result<Vec<_>>>()?;
            raw(set, &idx)
        }
        (kind, InputSource::Features { .. }) => {
            Err(NeuralError::KindMismatch(format!("{kind:?} needs epochs, got a feature matrix")))
        }
        (InputKind::PsdFeatures, InputSource::Epochs { .. }) => {
            Err(NeuralError::KindMismatch("psd_features needs a feature matrix, got epochs".into()))
        }
        (InputKind::RawAll, _) => Err(NeuralError::KindMismatch("raw_all takes every channel".into())),
        (InputKind::RawSelected, _) => Err(NeuralError::KindMismatch("raw_selected needs a channel list".into())),
    }
}

fn raw<T: Real>(set: &EpochSet, channels: &[usize]) -> Result<SequenceBatch<T>> {
    let steps = set
        .uniform_timesteps()
        .ok_or_else(|| NeuralError::ShapeMismatch("raw input needs equal-length epochs".into()))?;
    let f = channels.len();
    let mut data = vec![T::zero(); set.len() * steps * f];
    for (b, e) in set.epochs().iter().enumerate() {
        let out = &mut data[b * steps * f..(b + 1) * steps * f];
        for (k, &c) in channels.iter().enumerate() {
            for (t, &v) in e.channel(c).iter().enumerate() {
                out[t * f + k] = T::of_f32(v);
            }
        }
    }
    SequenceBatch::new(data, set.len(), steps, f, set.labels(), set.n_classes())
}

/// Per-feature z-scoring with statistics from the training sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelNormalizer {
    pub fn fit<T: Real>(batch: &SequenceBatch<T>) -> Self {
        let f = batch.features;
        let n = (batch.batch * batch.timesteps).max(1) as f64;
        let mut mean = vec![0.0; f];
        for row in batch.data.chunks(f.max(1)) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for row in batch.data.chunks(f.max(1)) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v.as_f64() - m;
                *s += d * d;
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply<T: Real>(&self, batch: &SequenceBatch<T>) -> Result<SequenceBatch<T>> {
        if batch.features != self.mean.len() {
            return Err(NeuralError::DimensionMismatch {
                what: "normalizer features",
                expected: self.mean.len(),
                actual: batch.features,
            });
        }
        let f = batch.features;
        let mut out = batch.clone();
        for (i, v) in out.data.iter_mut().enumerate() {
            let k = i % f;
            *v = T::lit((v.as_f64() - self.mean[k]) / self.std[k]);
        }
        Ok(out)
    }
}
