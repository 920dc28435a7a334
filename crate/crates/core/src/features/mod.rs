//! Band-power feature matrices and the dimensionality-reduction strategies
//! (PCA, gain-based selection, channel subsetting).

mod pca;
mod selection;

pub use pca::{pca_fit, PcaModel};
pub use selection::{
    columns_to_channels, intersect_selected, select_by_gain, write_selection_csv, ImportanceReport,
};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::EpochSet;
use crate::dsp::{relative_band_power, BandDef, Denominator, DspError, WelchEstimator, WelchParams};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("epoch set is empty")]
    EmptySet,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("all gains are zero")]
    AllZeroGains,
    #[error("columns carry PCA component provenance, not channels")]
    PcaProvenance,
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, FeatureError>;

/// Where a feature column came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    ChannelBand {
        channel: String,
        band: String,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        truncated: bool,
    },
    Component { index: usize },
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::ChannelBand { channel, band, .. } => write!(f, "{channel}/{band}"),
            Provenance::Component { index } => write!(f, "component-{index}"),
        }
    }
}

/// `n_epochs × n_features` table with per-column provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix<T> {
    values: Vec<T>,
    n_rows: usize,
    n_cols: usize,
    provenance: Vec<Provenance>,
    labels: Vec<usize>,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(values: Vec<T>, n_rows: usize, provenance: Vec<Provenance>, labels: Vec<usize>) -> Result<Self> {
        let n_cols = provenance.len();
        if values.len() != n_rows * n_cols {
            return Err(FeatureError::Invalid(format!(
                "{} values for {n_rows}×{n_cols} matrix",
                values.len()
            )));
        }
        if labels.len() != n_rows {
            return Err(FeatureError::Invalid(format!("{} labels for {n_rows} rows", labels.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { row: pos / n_cols.max(1), col: pos % n_cols.max(1) });
        }
        Ok(Self { values, n_rows, n_cols, provenance, labels })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            values,
            n_rows: idx.len(),
            n_cols: self.n_cols,
            provenance: self.provenance.clone(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Self {
            values,
            n_rows: self.n_rows,
            n_cols: cols.len(),
            provenance: cols.iter().map(|&c| self.provenance[c].clone()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Keep columns whose channel passes `keep`; component columns are rejected.
    pub fn select_channel_columns<F: Fn(&str) -> bool>(&self, keep: F) -> Result<Self> {
        let mut cols = Vec::new();
        for (c, p) in self.provenance.iter().enumerate() {
            match p {
                Provenance::ChannelBand { channel, .. } if keep(channel) => cols.push(c),
                Provenance::ChannelBand { .. } => {}
                Provenance::Component { .. } => return Err(FeatureError::PcaProvenance),
            }
        }
        Ok(self.select_columns(&cols))
    }

    pub fn map_values<F: FnMut(usize, usize, T) -> T>(&self, mut f: F) -> Self {
        let mut out = self.clone();
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                let v = &mut out.values[r * self.n_cols + c];
                *v = f(r, c, *v);
            }
        }
        out
    }

    pub(crate) fn with_values(&self, values: Vec<T>, provenance: Vec<Provenance>) -> Self {
        let n_cols = provenance.len();
        debug_assert_eq!(values.len(), self.n_rows * n_cols);
        Self { values, n_rows: self.n_rows, n_cols, provenance, labels: self.labels.clone() }
    }
}

/// Spectral feature configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub bands: Vec<BandDef>,
    pub welch: WelchParams,
    #[serde(default)]
    pub denominator: Denominator,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self { bands: crate::dsp::standard_bands(), welch: WelchParams::default(), denominator: Denominator::default() }
    }
}

/// Relative band power per (channel, band), channel-major.
pub fn build_feature_matrix<T: Real>(set: &EpochSet, params: &FeatureParams) -> Result<FeatureMatrix<T>> {
    if set.is_empty() {
        return Err(FeatureError::EmptySet);
    }
    let fs = set.sampling_rate_hz();
    let n_bands = params.bands.len();
    let mut estimators: HashMap<usize, WelchEstimator<T>> = HashMap::new();
    for e in set.epochs() {
        let seg = params.welch.seg_len(e.n_timesteps(), fs);
        if let std::collections::hash_map::Entry::Vacant(slot) = estimators.entry(seg) {
            slot.insert(WelchEstimator::new(seg, params.welch.overlap_frac, params.welch.taper)?);
        }
    }
    let rows: Vec<Vec<T>> = set
        .epochs()
        .par_iter()
        .map(|e| {
            let est = &estimators[&params.welch.seg_len(e.n_timesteps(), fs)];
            let mut row = Vec::with_capacity(e.n_channels() * n_bands);
            let mut buf = vec![T::zero(); e.n_timesteps()];
            for c in 0..e.n_channels() {
                for (b, &v) in buf.iter_mut().zip(e.channel(c)) {
                    *b = T::of_f32(v);
                }
                let psd = est.estimate(&buf, fs)?;
                row.extend(relative_band_power(&psd, &params.bands, params.denominator)?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let provenance = set
        .channels()
        .iter()
        .flat_map(|ch| {
            params.bands.iter().map(move |b| Provenance::ChannelBand {
                channel: ch.name.clone(),
                band: b.name.clone(),
                truncated: b.truncated,
            })
        })
        .collect();
    FeatureMatrix::new(rows.concat(), set.len(), provenance, set.labels())
}

/// Column z-scoring with statistics from training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    /// Population statistics; constant columns get unit scale.
    pub fn fit(x: &FeatureMatrix<T>) -> Self {
        let n = T::of_usize(x.n_rows().max(1));
        let mut mean = vec![T::zero(); x.n_cols()];
        for row in x.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); x.n_cols()];
        for row in x.rows() {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let tiny = T::epsilon().sqrt();
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > tiny {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        if x.n_cols() != self.mean.len() {
            return Err(FeatureError::DimensionMismatch { expected: self.mean.len(), actual: x.n_cols() });
        }
        Ok(x.map_values(|_, c, v| (v - self.mean[c]) / self.std[c]))
    }
}
