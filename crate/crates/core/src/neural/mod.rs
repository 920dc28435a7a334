//! LSTM and BiLSTM sequence classifiers with a dense/dropout/softmax head,
//! hand-derived backpropagation through time and momentum SGD.

mod input;
mod lstm;
mod network;
mod train;

pub use input::{shape_input, ChannelNormalizer, InputKind, InputSource, SequenceBatch};
pub use lstm::{bilstm_forward, lstm_forward, LstmCellParams, LstmOutput};
pub use network::{backward, forward, forward_trace, loss, softmax_ce_logit_grad, HeadTrace, Mode};
pub use train::{
    load_artifact, save_artifact, train, write_history_csv, EpochRecord, ModelArtifact, TrainConfig, TrainOutcome,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch { what: &'static str, expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input kind mismatch: {0}")]
    KindMismatch(String),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("model artifact {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("model artifact: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Front {
    Lstm { hidden: usize },
    BiLstm { hidden: usize },
}

impl Front {
    pub fn hidden(&self) -> usize {
        match *self {
            Front::Lstm { hidden } | Front::BiLstm { hidden } => hidden,
        }
    }

    pub fn directions(&self) -> usize {
        match self {
            Front::Lstm { .. } => 1,
            Front::BiLstm { .. } => 2,
        }
    }
}

/// Recurrent front end, two ReLU dense layers and a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub front: Front,
    pub dense: [usize; 2],
    pub n_classes: usize,
    /// Rates after the recurrent output and after the first dense layer.
    pub dropout: [f64; 2],
}

impl NetworkSpec {
    pub fn bilstm(input_dim: usize, n_classes: usize) -> Self {
        Self { input_dim, front: Front::BiLstm { hidden: 64 }, dense: [64, 32], n_classes, dropout: [0.4, 0.4] }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NeuralError::InvalidSpec(m));
        if self.input_dim == 0 || self.front.hidden() == 0 || self.dense.contains(&0) {
            return bad(format!("zero-sized layer in {self:?}"));
        }
        if self.n_classes < 2 {
            return bad(format!("{} output classes", self.n_classes));
        }
        if self.dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad(format!("dropout {:?} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn representation_dim(&self) -> usize {
        self.front.hidden() * self.front.directions()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSlots {
    pub d: usize,
    pub h: usize,
    pub w: usize,
    pub u: usize,
    pub b: usize,
}

impl CellSlots {
    pub fn len(&self) -> usize {
        4 * self.h * (self.d + self.h + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseSlots {
    pub n_in: usize,
    pub n_out: usize,
    pub w: usize,
    pub b: usize,
}

/// Offsets of every tensor in the flat parameter vector: recurrent cells
/// (forward, then backward), then the three dense layers. Each cell holds
/// `W (4h × d)`, `U (4h × h)`, `b (4h)` with gate blocks ordered input,
/// forget, cell, output; dense weights are `n_out × n_in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub cells: Vec<CellSlots>,
    pub dense: [DenseSlots; 3],
    pub len: usize,
}

impl Layout {
    fn new(spec: &NetworkSpec) -> Self {
        let (d, h) = (spec.input_dim, spec.front.hidden());
        let mut at = 0;
        let mut cells = Vec::new();
        for _ in 0..spec.front.directions() {
            let slots = CellSlots { d, h, w: at, u: at + 4 * h * d, b: at + 4 * h * (d + h) };
            at += slots.len();
            cells.push(slots);
        }
        let sizes = [spec.representation_dim(), spec.dense[0], spec.dense[1], spec.n_classes];
        let dense = std::array::from_fn(|k| {
            let s = DenseSlots { n_in: sizes[k], n_out: sizes[k + 1], w: at, b: at + sizes[k] * sizes[k + 1] };
            at += s.n_out * (s.n_in + 1);
            s
        });
        Self { cells, dense, len: at }
    }
}

/// Seeded initial parameters: uniform(±1/√h) recurrent weights, uniform(±1/√n_in)
/// dense weights, zero biases except the forget gate at 1.
pub fn init_params<T: Real>(spec: &NetworkSpec, seed: u64) -> Vec<T> {
    let layout = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![T::zero(); layout.len];
    for cell in &layout.cells {
        let bound = 1.0 / (cell.h as f64).sqrt();
        for v in &mut p[cell.w..cell.b] {
            *v = T::lit(rng.random_range(-bound..bound));
        }
        for v in &mut p[cell.b + cell.h..cell.b + 2 * cell.h] {
            *v = T::one();
        }
    }
    for dense in &layout.dense {
        let bound = 1.0 / (dense.n_in as f64).sqrt();
        for v in &mut p[dense.w..dense.b] {
            *v = T::lit(rng.random_range(-bound..bound));
        }
    }
    p
}

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

#[inline]
pub(crate) fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
