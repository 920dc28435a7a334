//! Welch power spectral density and relative band power.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{BandDef, DspError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    Rectangular,
    /// Periodic Hann.
    Hann,
}

impl Taper {
    pub fn coefficients<T: Real>(self, n: usize) -> Vec<T> {
        match self {
            Taper::Rectangular => vec![T::one(); n],
            Taper::Hann => (0..n)
                .map(|i| {
                    let x = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    T::lit(0.5 - 0.5 * x.cos())
                })
                .collect(),
        }
    }
}

/// Segment length in seconds (clipped to the signal), overlap and taper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchParams {
    pub segment_s: f64,
    pub overlap_frac: f64,
    pub taper: Taper,
}

impl Default for WelchParams {
    fn default() -> Self {
        Self { segment_s: 1.0, overlap_frac: 0.5, taper: Taper::Hann }
    }
}

impl WelchParams {
    pub fn seg_len(&self, n_samples: usize, fs: f64) -> usize {
        ((self.segment_s * fs).round() as usize).clamp(1, n_samples.max(1))
    }
}

/// One-sided PSD in signal units²/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate<T> {
    pub freqs_hz: Vec<T>,
    pub power: Vec<T>,
    pub seg_len: usize,
    pub overlap_frac: f64,
    pub n_segments: usize,
}

impl<T: Real> PsdEstimate<T> {
    /// Frequency of the largest bin.
    pub fn argmax_hz(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, &p)| if p > best.1 { (i, p) } else { best });
        self.freqs_hz[i].as_f64()
    }

    pub fn max_freq_hz(&self) -> f64 {
        self.freqs_hz.last().map_or(0.0, |f| f.as_f64())
    }

    /// Integral of the piecewise-linear PSD over `[lo, hi]` (trapezoidal,
    /// with linear interpolation at band edges that fall between bins).
    pub fn integrate(&self, lo: f64, hi: f64) -> T {
        let f = &self.freqs_hz;
        let p = &self.power;
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        let mut acc = T::zero();
        for i in 0..f.len().saturating_sub(1) {
            let (f0, f1) = (f[i], f[i + 1]);
            let a = if lo > f0 { lo } else { f0 };
            let b = if hi < f1 { hi } else { f1 };
            if b <= a {
                continue;
            }
            let slope = (p[i + 1] - p[i]) / (f1 - f0);
            let pa = p[i] + slope * (a - f0);
            let pb = p[i] + slope * (b - f0);
            acc += T::lit(0.5) * (pa + pb) * (b - a);
        }
        acc
    }
}

/// Reusable Welch estimator for a fixed segment length.
pub struct WelchEstimator<T: Real> {
    seg_len: usize,
    step: usize,
    overlap_frac: f64,
    window: Vec<T>,
    window_power: T,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Real> WelchEstimator<T> {
    pub fn new(seg_len: usize, overlap_frac: f64, taper: Taper) -> Result<Self> {
        if seg_len == 0 {
            return Err(DspError::Invalid("segment length must be positive".into()));
        }
        if !(0.0..1.0).contains(&overlap_frac) {
            return Err(DspError::Invalid(format!("overlap fraction {overlap_frac} outside [0, 1)")));
        }
        let overlap = ((seg_len as f64) * overlap_frac).floor() as usize;
        let window: Vec<T> = taper.coefficients(seg_len);
        let window_power = window.iter().map(|&w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(seg_len);
        Ok(Self { seg_len, step: (seg_len - overlap).max(1), overlap_frac, window, window_power, fft })
    }

    pub fn seg_len(&self) -> usize {
        self.seg_len
    }

    pub fn estimate(&self, signal: &[T], fs: f64) -> Result<PsdEstimate<T>> {
        let n = signal.len();
        if self.seg_len > n {
            return Err(DspError::SegmentTooLong { seg_len: self.seg_len, len: n });
        }
        let n_bins = self.seg_len / 2 + 1;
        let n_segments = (n - self.seg_len) / self.step + 1;
        let mut acc = vec![T::zero(); n_bins];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.seg_len];
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); self.fft.get_inplace_scratch_len()];
        for s in 0..n_segments {
            let seg = &signal[s * self.step..s * self.step + self.seg_len];
            for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new(x * w, T::zero());
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
        }
        let scale = T::one() / (T::lit(fs) * self.window_power * T::of_usize(n_segments));
        let nyquist_bin = (self.seg_len % 2 == 0).then_some(n_bins - 1);
        let power = acc
            .into_iter()
            .enumerate()
            .map(|(k, a)| {
                // one-sided: fold negative frequencies except DC and Nyquist
                let fold = if k == 0 || Some(k) == nyquist_bin { T::one() } else { T::lit(2.0) };
                a * scale * fold
            })
            .collect();
        let df = fs / self.seg_len as f64;
        let freqs_hz = (0..n_bins).map(|k| T::lit(k as f64 * df)).collect();
        Ok(PsdEstimate { freqs_hz, power, seg_len: self.seg_len, overlap_frac: self.overlap_frac, n_segments })
    }
}

/// Welch PSD: mean of tapered periodograms of `seg_len`-sample segments.
pub fn welch_psd<T: Real>(signal: &[T], fs: f64, seg_len: usize, overlap_frac: f64, taper: Taper) -> Result<PsdEstimate<T>> {
    WelchEstimator::new(seg_len, overlap_frac, taper)?.estimate(signal, fs)
}

/// Normalizer for relative band power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Integral over the union of the requested bands.
    #[default]
    UnionOfBands,
    /// Integral over the whole PSD range `[0, fs/2]`.
    Total,
}

fn merged_intervals(bands: &[BandDef]) -> Vec<(f64, f64)> {
    let mut iv: Vec<(f64, f64)> = bands.iter().map(|b| (b.low_hz, b.high_hz)).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (lo, hi) in iv {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// Band-integrated power of each band divided by the chosen denominator.
pub fn relative_band_power<T: Real>(psd: &PsdEstimate<T>, bands: &[BandDef], denominator: Denominator) -> Result<Vec<T>> {
    let max = psd.max_freq_hz();
    for b in bands {
        // a tolerance of a millionth of a bin absorbs rounding in the frequency grid
        let slack = 1e-6 * max / psd.freqs_hz.len().max(1) as f64;
        if b.low_hz < 0.0 || b.high_hz > max + slack {
            return Err(DspError::BandOutOfRange { name: b.name.clone(), low: b.low_hz, high: b.high_hz, max });
        }
    }
    let total = match denominator {
        Denominator::UnionOfBands => merged_intervals(bands).into_iter().map(|(lo, hi)| psd.integrate(lo, hi)).sum(),
        Denominator::Total => psd.integrate(0.0, max),
    };
    if !(total > T::zero()) {
        return Err(DspError::ZeroTotalPower);
    }
    Ok(bands.iter().map(|b| psd.integrate(b.low_hz, b.high_hz) / total).collect())
}
