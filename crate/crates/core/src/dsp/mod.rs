//! Preprocessing filters, resampling, windowing and spectral features.

mod filter;
mod resample;
mod welch;
mod windows;

pub use filter::{bandpass_filter, highpass_filter, lowpass_filter, notch_filter, Biquad, Sos};
pub use resample::resample;
pub use welch::{
    relative_band_power, welch_psd, Denominator, PsdEstimate, Taper, WelchEstimator, WelchParams,
};
pub use windows::{sliding_windows, window_plan};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EpochSet, DataError};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid band edges: low={low} Hz, high={high} Hz at fs={fs} Hz")]
    InvalidBandEdges { low: f64, high: f64, fs: f64 },
    #[error("signal too short: {len} samples, need more than {min}")]
    SignalTooShort { len: usize, min: usize },
    #[error("invalid frequency {f0} Hz at fs={fs} Hz")]
    InvalidFrequency { f0: f64, fs: f64 },
    #[error("upsampling from {fs_in} Hz to {fs_out} Hz is unsupported")]
    UpsamplingUnsupported { fs_in: f64, fs_out: f64 },
    #[error("window of {width} samples exceeds epoch of {len}")]
    WindowTooLong { width: usize, len: usize },
    #[error("segment of {seg_len} samples exceeds signal of {len}")]
    SegmentTooLong { seg_len: usize, len: usize },
    #[error("total band power is zero")]
    ZeroTotalPower,
    #[error("band {name} ({low}-{high} Hz) outside PSD range 0-{max} Hz")]
    BandOutOfRange { name: String, low: f64, high: f64, max: f64 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Named frequency band. `truncated` marks a band clipped by upstream filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDef {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

impl BandDef {
    pub fn new(name: impl Into<String>, low_hz: f64, high_hz: f64) -> Result<Self> {
        let name = name.into();
        if !(low_hz > 0.0 && low_hz < high_hz) {
            return Err(DspError::Invalid(format!("band {name}: need 0 < low < high, got {low_hz}-{high_hz}")));
        }
        Ok(Self { name, low_hz, high_hz, truncated: false })
    }

    pub fn width_hz(&self) -> f64 {
        self.high_hz - self.low_hz
    }
}

/// alpha 8-13 Hz, beta 13-30 Hz, gamma 30-100 Hz.
pub fn standard_bands() -> Vec<BandDef> {
    vec![
        BandDef::new("alpha", 8.0, 13.0).unwrap(),
        BandDef::new("beta", 13.0, 30.0).unwrap(),
        BandDef::new("gamma", 30.0, 100.0).unwrap(),
    ]
}

/// Clip bands to `max_hz`, flagging the clipped ones; bands entirely above are dropped.
pub fn clip_bands(bands: &[BandDef], max_hz: f64) -> Vec<BandDef> {
    bands
        .iter()
        .filter(|b| b.low_hz < max_hz)
        .map(|b| {
            if b.high_hz > max_hz {
                BandDef { high_hz: max_hz, truncated: true, ..b.clone() }
            } else {
                b.clone()
            }
        })
        .collect()
}

pub const NOTCH_QUALITY: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessProfile {
    pub bandpass: Option<(f64, f64)>,
    pub notch_hz: Option<f64>,
    pub target_rate_hz: Option<f64>,
    pub filter_order: usize,
}

impl PreprocessProfile {
    pub fn thinking_out_loud() -> Self {
        Self { bandpass: Some((0.5, 100.0)), notch_hz: Some(50.0), target_rate_hz: Some(254.0), filter_order: 4 }
    }

    pub fn imagined_speech() -> Self {
        Self { bandpass: Some((2.0, 40.0)), notch_hz: None, target_rate_hz: None, filter_order: 4 }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "thinking-out-loud" => Some(Self::thinking_out_loud()),
            "imagined-speech" => Some(Self::imagined_speech()),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 2] = ["thinking-out-loud", "imagined-speech"];

    /// Checks the profile against a source sampling rate.
    pub fn validate(&self, fs_in: f64) -> Result<()> {
        let fs_out = self.target_rate_hz.unwrap_or(fs_in);
        if fs_out > fs_in {
            return Err(DspError::UpsamplingUnsupported { fs_in, fs_out });
        }
        if let Some((low, high)) = self.bandpass {
            if !(low > 0.0 && low < high && high < fs_out / 2.0) {
                return Err(DspError::InvalidBandEdges { low, high, fs: fs_out });
            }
        }
        if let Some(f0) = self.notch_hz {
            if !(f0 > 0.0 && f0 < fs_in / 2.0) {
                return Err(DspError::InvalidFrequency { f0, fs: fs_in });
            }
        }
        if self.filter_order == 0 {
            return Err(DspError::Invalid("filter_order must be at least 1".into()));
        }
        Ok(())
    }

    /// Upper frequency still observable after this profile.
    pub fn passband_limit_hz(&self, fs_in: f64) -> f64 {
        let nyq = self.target_rate_hz.unwrap_or(fs_in) / 2.0;
        self.bandpass.map_or(nyq, |(_, h)| h.min(nyq))
    }

    /// Band set for features under this profile (gamma truncated when the passband ends below it).
    pub fn bands(&self, fs_in: f64) -> Vec<BandDef> {
        clip_bands(&standard_bands(), self.passband_limit_hz(fs_in))
    }

    /// Bandpass, then notch, then resample, channel by channel.
    pub fn apply_signal<T: Real>(&self, signal: &[T], fs_in: f64) -> Result<Vec<T>> {
        self.validate(fs_in)?;
        let mut x = signal.to_vec();
        if let Some((low, high)) = self.bandpass {
            x = bandpass_filter(&x, fs_in, low, high, self.filter_order)?;
        }
        if let Some(f0) = self.notch_hz {
            x = notch_filter(&x, fs_in, f0, NOTCH_QUALITY)?;
        }
        if let Some(fs_out) = self.target_rate_hz {
            x = resample(&x, fs_in, fs_out)?;
        }
        Ok(x)
    }

    pub fn apply(&self, set: &EpochSet) -> Result<EpochSet> {
        let fs_in = set.sampling_rate_hz();
        self.validate(fs_in)?;
        let epochs = set
            .epochs()
            .iter()
            .map(|e| {
                e.map_channels(|row| {
                    let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                    Ok(self.apply_signal(&x, fs_in)?.into_iter().map(|v| v as f32).collect())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(set.with_epochs_at_rate(epochs, self.target_rate_hz.unwrap_or(fs_in))?)
    }
}
