use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{accumulate, argmax, forward, Mode};
use super::{init_params, ChannelNormalizer, InputKind, NetworkSpec, NeuralError, Result, SequenceBatch};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation-loss improvement before stopping.
    pub patience: usize,
    /// Rescale each minibatch gradient to at most this L2 norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, batch_size: 16, max_epochs: 150, patience: 20, clip_norm: None, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NeuralError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NeuralError::InvalidConfig(format!("momentum {}", self.momentum)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(NeuralError::InvalidConfig("batch size and epoch budget must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(NeuralError::InvalidConfig(format!("clip norm {:?}", self.clip_norm)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    /// Parameters at the best validation-loss epoch.
    pub params: Vec<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Momentum SGD on mean cross-entropy with seeded shuffling and dropout, early
/// stopping on validation loss.
pub fn train<T: Real>(
    spec: &NetworkSpec,
    train_set: &SequenceBatch<T>,
    val_set: &SequenceBatch<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    spec.validate()?;
    config.validate()?;
    if train_set.batch == 0 || val_set.batch == 0 {
        return Err(NeuralError::InvalidConfig("empty training or validation split".into()));
    }
    let layout = spec.layout();
    let mut params: Vec<T> = init_params(spec, config.seed);
    // probe shapes once so errors surface before any update
    forward(spec, &params, &val_set.subset(&[0]), Mode::Eval)?;
    forward(spec, &params, &train_set.subset(&[0]), Mode::Eval)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let lr = T::lit(config.learning_rate);
    let mu = T::lit(config.momentum);
    let mut velocity = vec![T::zero(); layout.len];
    let mut grad = vec![T::zero(); layout.len];
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.batch).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = T::zero());
            let (l, c) = accumulate(spec, &layout, &params, train_set, chunk, Some(&mut rng), &mut grad);
            let l = l.as_f64();
            if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NeuralError::NonFiniteLoss { epoch, batch: b, loss: l / chunk.len() as f64 });
            }
            loss_sum += l;
            correct += c;
            if let Some(max) = config.clip_norm {
                let norm = grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
                if norm > max {
                    let s = T::lit(max / norm);
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            for ((p, v), &g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = mu * *v - lr * g;
                *p += *v;
            }
        }
        let (val_loss, val_acc) = evaluate(spec, &params, val_set)?;
        if !val_loss.is_finite() {
            return Err(NeuralError::NonFiniteLoss { epoch, batch: usize::MAX, loss: val_loss });
        }
        let n = train_set.batch as f64;
        history.push(EpochRecord { epoch, train_loss: loss_sum / n, val_loss, train_acc: correct as f64 / n, val_acc });
        log::debug!("epoch {epoch}: train {:.4} val {val_loss:.4} acc {val_acc:.3}", loss_sum / n);
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        } else if epoch - best.1 >= config.patience {
            break;
        }
    }
    Ok(TrainOutcome { params: best.2, best_epoch: best.1, history })
}

/// Eval-mode mean loss and accuracy.
pub(crate) fn evaluate<T: Real>(spec: &NetworkSpec, params: &[T], set: &SequenceBatch<T>) -> Result<(f64, f64)> {
    let probs = forward(spec, params, set, Mode::Eval)?;
    let mut total = 0.0;
    let mut correct = 0;
    for (p, &l) in probs.iter().zip(&set.labels) {
        total -= p[l].as_f64().max(1e-12).ln();
        correct += usize::from(argmax(p) == l);
    }
    let n = set.batch as f64;
    Ok((total / n, correct as f64 / n))
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,train_loss,val_loss,train_acc,val_acc")?;
    for r in history {
        writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.train_acc, r.val_acc)?;
    }
    out.flush()
}

pub const ARTIFACT_FORMAT: &str = "innerspeech-network";
pub const ARTIFACT_VERSION: u32 = 1;

/// Trained network plus everything needed to prepare its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub spec: NetworkSpec,
    pub input_kind: InputKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<ChannelNormalizer>,
    #[serde(skip)]
    pub params: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct ArtifactHeader {
    format: String,
    version: u32,
    n_params: usize,
    #[serde(flatten)]
    model: ModelArtifact,
}

fn artifact_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("f32"))
}

/// Write `<stem>.json` (spec and preprocessing) and `<stem>.f32` (little-endian
/// parameters in layout order).
pub fn save_artifact(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    let (json, blob) = artifact_paths(path);
    let header = ArtifactHeader {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        n_params: artifact.params.len(),
        model: artifact.clone(),
    };
    let text = serde_json::to_string_pretty(&header).map_err(|e| NeuralError::Format(e.to_string()))?;
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| NeuralError::Io { path: p, source }
    };
    std::fs::write(&json, text).map_err(io(&json))?;
    let bytes: Vec<u8> = artifact.params.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&blob, bytes).map_err(io(&blob))
}

pub fn load_artifact(path: &Path) -> Result<ModelArtifact> {
    let (json, blob) = artifact_paths(path);
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| NeuralError::Io { path: p, source }
    };
    let text = std::fs::read_to_string(&json).map_err(io(&json))?;
    let header: ArtifactHeader = serde_json::from_str(&text).map_err(|e| NeuralError::Format(e.to_string()))?;
    if header.format != ARTIFACT_FORMAT || header.version != ARTIFACT_VERSION {
        return Err(NeuralError::Format(format!("unsupported artifact {} v{}", header.format, header.version)));
    }
    let bytes = std::fs::read(&blob).map_err(io(&blob))?;
    let expected = header.spec_len() * 4;
    if bytes.len() != expected || header.n_params != header.spec_len() {
        return Err(NeuralError::Format(format!(
            "parameter blob holds {} bytes, spec needs {expected}",
            bytes.len()
        )));
    }
    let mut model = header.model;
    model.params = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok(model)
}

impl ArtifactHeader {
    fn spec_len(&self) -> usize {
        self.model.spec.layout().len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Front;
    use rand::Rng;

    fn spec() -> NetworkSpec {
        NetworkSpec { input_dim: 2, front: Front::BiLstm { hidden: 6 }, dense: [8, 8], n_classes: 2, dropout: [0.1, 0.1] }
    }

    /// Class 1 sequences carry a slow ramp on feature 0; class 0 are flat noise.
    fn toy(n: usize, seed: u64) -> SequenceBatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = 8;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l = i % 2;
            for t in 0..steps {
                data.push(rng.random_range(-0.3..0.3) + if l == 1 { t as f64 / 4.0 } else { 0.0 });
                data.push(rng.random_range(-0.3..0.3));
            }
            labels.push(l);
        }
        SequenceBatch::new(data, n, steps, 2, labels, 2).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_initial_parameters() {
        let cfg = TrainConfig { learning_rate: 0.0, max_epochs: 3, seed: 4, ..TrainConfig::default() };
        let out = train(&spec(), &toy(20, 1), &toy(6, 2), &cfg).unwrap();
        assert_eq!(out.params, init_params::<f64>(&spec(), 4));
    }

    #[test]
    fn learns_toy_task_deterministically() {
        let cfg = TrainConfig { learning_rate: 0.05, max_epochs: 40, patience: 40, batch_size: 8, seed: 3, ..TrainConfig::default() };
        let a = train(&spec(), &toy(64, 1), &toy(32, 2), &cfg).unwrap();
        let b = train(&spec(), &toy(64, 1), &toy(32, 2), &cfg).unwrap();
        assert_eq!(a, b);
        let best = &a.history[a.best_epoch - 1];
        assert!(best.val_acc >= 0.9, "{best:?}");
        assert!(a.history.iter().all(|r| r.val_loss >= best.val_loss));
    }

    #[test]
    fn early_stopping_respects_patience() {
        let cfg = TrainConfig { learning_rate: 0.0, max_epochs: 50, patience: 3, seed: 1, ..TrainConfig::default() };
        let out = train(&spec(), &toy(10, 1), &toy(4, 2), &cfg).unwrap();
        assert_eq!(out.best_epoch, 1);
        assert_eq!(out.history.len(), 4);
    }

    #[test]
    fn exploding_rate_reports_non_finite_loss() {
        let cfg = TrainConfig { learning_rate: 1e30, momentum: 0.0, max_epochs: 5, seed: 1, ..TrainConfig::default() };
        let data = toy(32, 1);
        let big = SequenceBatch { data: data.data.iter().map(|v| v * 1e3).collect(), ..data };
        assert!(matches!(train(&spec(), &big, &toy(4, 2), &cfg), Err(NeuralError::NonFiniteLoss { .. })));
    }

    #[test]
    fn artifact_and_history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let params: Vec<f32> = init_params(&spec(), 9);
        let art = ModelArtifact {
            spec: spec(),
            input_kind: InputKind::RawAll,
            channels: None,
            normalizer: Some(ChannelNormalizer { mean: vec![0.5, 1.0], std: vec![2.0, 3.0] }),
            params,
        };
        let stem = dir.path().join("net");
        save_artifact(&art, &stem).unwrap();
        assert_eq!(load_artifact(&stem).unwrap(), art);
        std::fs::write(stem.with_extension("f32"), [0u8; 8]).unwrap();
        assert!(matches!(load_artifact(&stem), Err(NeuralError::Format(_))));

        let path = dir.path().join("history.csv");
        let rec = EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.25, train_acc: 0.75, val_acc: 1.0 };
        write_history_csv(&path, &[rec]).unwrap();
        assert_eq!(
            std::fs::read_to_string(path).unwrap(),
            "epoch,train_loss,val_loss,train_acc,val_acc\n1,0.5,0.25,0.75,1\n"
        );
    }
}
