//! Synthetic EEG with known class structure: pink-plus-white noise with
//! per-class sinusoidal injections at a random phase per trial.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{montage, DataError, Epoch, EpochSet, Interval, Trial, TrialSet, WORDS_4};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("injection at {high_hz} Hz is not below the Nyquist frequency {nyquist_hz} Hz")]
    NyquistViolation { high_hz: f64, nyquist_hz: f64 },
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// One oscillation added to a channel; the frequency is drawn per trial from
/// `[low_hz, high_hz]` (equal bounds give a fixed tone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub channel: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub n_trials_per_class: usize,
    pub channels: Vec<String>,
    pub sampling_rate_hz: f64,
    pub duration_s: f64,
    /// Injections for each class, indexed by label.
    pub class_signatures: Vec<Vec<Injection>>,
    /// Standard deviation of the noise, split evenly in power between pink and white.
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub class_names: Vec<String>,
}

pub const DEFAULT_CHANNELS: [&str; 8] = ["F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2"];

impl SynthSpec {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_timesteps(&self) -> usize {
        (self.duration_s * self.sampling_rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.n_classes < 1 || self.n_trials_per_class < 1 || self.channels.is_empty() {
            return bad("need at least one class, trial and channel".into());
        }
        if !(self.sampling_rate_hz > 0.0 && self.duration_s > 0.0) || self.n_timesteps() < 2 {
            return bad(format!("{} s at {} Hz", self.duration_s, self.sampling_rate_hz));
        }
        if self.class_signatures.len() != self.n_classes {
            return bad(format!("{} signatures for {} classes", self.class_signatures.len(), self.n_classes));
        }
        if !self.class_names.is_empty() && self.class_names.len() != self.n_classes {
            return bad(format!("{} class names for {} classes", self.class_names.len(), self.n_classes));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {}", self.noise_sigma));
        }
        let nyquist_hz = self.sampling_rate_hz / 2.0;
        for inj in self.class_signatures.iter().flatten() {
            if inj.channel >= self.channels.len() {
                return bad(format!("injection on channel {} of {}", inj.channel, self.channels.len()));
            }
            if !(inj.amplitude >= 0.0 && inj.amplitude.is_finite()) {
                return bad(format!("amplitude {}", inj.amplitude));
            }
            if !(inj.low_hz > 0.0 && inj.low_hz <= inj.high_hz) {
                return bad(format!("band {}-{} Hz", inj.low_hz, inj.high_hz));
            }
            if inj.high_hz >= nyquist_hz {
                return Err(SynthError::NyquistViolation { high_hz: inj.high_hz, nyquist_hz });
            }
        }
        Ok(())
    }

    fn names(&self) -> Vec<String> {
        if self.class_names.is_empty() {
            (0..self.n_classes).map(|k| format!("class{k}")).collect()
        } else {
            self.class_names.clone()
        }
    }
}

/// Four words on the 8-channel montage at 254 Hz for 2.5 s: class k drives
/// channels 2k and 2k+1 in alpha, beta, gamma, and alpha plus beta.
///
/// `snr` is injected power over noise power per driven channel; the two-band
/// class splits it evenly between its bands.
pub fn default_4class_spec(snr: f64, seed: u64) -> SynthSpec {
    assert!(snr >= 0.0 && snr.is_finite(), "snr must be a finite non-negative number");
    let sigma = 1.0;
    let single = (2.0 * snr).sqrt() * sigma;
    let split = snr.sqrt() * sigma;
    let bands: [&[(f64, f64)]; 4] =
        [&[(8.0, 13.0)], &[(13.0, 30.0)], &[(30.0, 100.0)], &[(8.0, 13.0), (13.0, 30.0)]];
    let class_signatures = bands
        .iter()
        .enumerate()
        .map(|(k, bs)| {
            let amplitude = if bs.len() == 1 { single } else { split };
            [2 * k, 2 * k + 1]
                .into_iter()
                .flat_map(|channel| {
                    bs.iter().map(move |&(low_hz, high_hz)| Injection { channel, low_hz, high_hz, amplitude })
                })
                .collect()
        })
        .collect();
    SynthSpec {
        n_classes: 4,
        n_trials_per_class: 100,
        channels: DEFAULT_CHANNELS.map(String::from).to_vec(),
        sampling_rate_hz: 254.0,
        duration_s: 2.5,
        class_signatures,
        noise_sigma: sigma,
        seed,
        class_names: WORDS_4.map(String::from).to_vec(),
    }
}

pub fn default_4class(snr: f64, seed: u64) -> EpochSet {
    generate(&default_4class_spec(snr, seed)).expect("default spec is valid")
}

/// Unit-variance 1/f noise: white noise shaped by 1/√f in the frequency domain.
fn pink(rng: &mut ChaCha8Rng, n: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(rng.sample(StandardNormal), 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex::new(0.0, 0.0);
    for k in 1..n {
        let f = k.min(n - k) as f64;
        buf[k] /= f.sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let x: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; n]
    }
}

/// Channel rows of one trial: `n_noise_only` samples of noise, then
/// `n_signal` samples of noise plus the label's injections.
fn trial_rows(spec: &SynthSpec, label: usize, trial: u64, n_noise_only: usize, n_signal: usize) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial);
    let mut planner = FftPlanner::new();
    let n = n_noise_only + n_signal;
    let w = (0.5f64).sqrt() * spec.noise_sigma;
    let mut rows: Vec<Vec<f64>> = (0..spec.n_channels())
        .map(|_| {
            let p = pink(&mut rng, n, &mut planner);
            p.iter().map(|&v| w * (v + rng.sample::<f64, _>(StandardNormal))).collect()
        })
        .collect();
    let fs = spec.sampling_rate_hz;
    for inj in &spec.class_signatures[label] {
        // draw even for silent injections so every amplitude sees the same noise
        let f = if inj.high_hz > inj.low_hz { rng.random_range(inj.low_hz..inj.high_hz) } else { inj.low_hz };
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let row = &mut rows[inj.channel][n_noise_only..];
        for (t, v) in row.iter_mut().enumerate() {
            *v += inj.amplitude * (std::f64::consts::TAU * f * t as f64 / fs + phase).sin();
        }
    }
    rows.into_iter().map(|r| r.into_iter().map(|v| v as f32).collect()).collect()
}

/// Balanced set of `n_classes × n_trials_per_class` epochs; epoch i has
/// label `i mod n_classes` and its own RNG stream.
pub fn generate(spec: &SynthSpec) -> Result<EpochSet> {
    spec.validate()?;
    let n_t = spec.n_timesteps();
    let total = spec.n_classes * spec.n_trials_per_class;
    let epochs = (0..total)
        .into_par_iter()
        .map(|i| {
            let label = i % spec.n_classes;
            Epoch::from_rows(&trial_rows(spec, label, i as u64, 0, n_t), label, Interval::Action)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let refs: Vec<&str> = spec.channels.iter().map(String::as_str).collect();
    Ok(EpochSet::new(epochs, spec.sampling_rate_hz, spec.names(), montage(&refs), n_t, "synth", "synthetic")?)
}

/// Full trials for the rest/action task: `rest_s` seconds of noise followed
/// by the action interval carrying the class injections.
pub fn generate_trials(spec: &SynthSpec, rest_s: f64) -> Result<TrialSet> {
    spec.validate()?;
    if !(rest_s > 0.0) {
        return Err(SynthError::Invalid(format!("rest duration {rest_s}")));
    }
    let fs = spec.sampling_rate_hz;
    let n_rest = (rest_s * fs).round() as usize;
    let n_t = spec.n_timesteps();
    let total = spec.n_classes * spec.n_trials_per_class;
    let trials = (0..total)
        .into_par_iter()
        .map(|i| {
            let label = i % spec.n_classes;
            Trial {
                rows: trial_rows(spec, label, i as u64, n_rest, n_t),
                label,
                rest: (0.0, n_rest as f64 / fs),
                action: (n_rest as f64 / fs, (n_rest + n_t) as f64 / fs),
            }
        })
        .collect();
    let refs: Vec<&str> = spec.channels.iter().map(String::as_str).collect();
    Ok(TrialSet {
        trials,
        sampling_rate_hz: fs,
        class_names: spec.names(),
        channels: montage(&refs),
        subject_id: "synth".into(),
        condition: "synthetic".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{save_epochset, split_rest_action};
    use crate::dsp::{relative_band_power, standard_bands, welch_psd, Denominator, Taper};

    fn band_share(x: &[f32], fs: f64, band: usize) -> f64 {
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let psd = welch_psd(&x, fs, 256, 0.5, Taper::Hann).unwrap();
        relative_band_power(&psd, &standard_bands(), Denominator::Total).unwrap()[band]
    }

    fn tone_spec(sigma: f64) -> SynthSpec {
        let tone = |channel| vec![Injection { channel, low_hz: 10.0, high_hz: 10.0, amplitude: 2.0 }];
        SynthSpec {
            n_classes: 2,
            n_trials_per_class: 5,
            channels: vec!["a".into(), "b".into(), "c".into()],
            sampling_rate_hz: 254.0,
            duration_s: 2.5,
            class_signatures: vec![tone(2), tone(0)],
            noise_sigma: sigma,
            seed: 3,
            class_names: vec![],
        }
    }

    #[test]
    fn noiseless_tone_is_alpha() {
        let set = generate(&tone_spec(0.0)).unwrap();
        for e in set.epochs().iter().filter(|e| e.label == 0) {
            assert!(band_share(e.channel(2), 254.0, 0) > 0.95);
            assert!(e.channel(0).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn default_shape_and_balance() {
        let set = default_4class(10.0, 1);
        assert_eq!((set.len(), set.n_channels(), set.n_timesteps()), (400, 8, 635));
        assert_eq!(set.class_counts(), [100; 4]);
        assert_eq!(set.class_names(), WORDS_4);
        assert!(set.epochs().iter().enumerate().all(|(i, e)| e.label == i % 4));
    }

    #[test]
    fn deterministic_bytes_and_distinct_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = |seed, name: &str| {
            let p = dir.path().join(name);
            save_epochset(&generate(&SynthSpec { seed, ..tone_spec(1.0) }).unwrap(), &p).unwrap();
            std::fs::read(p.with_extension("f32")).unwrap()
        };
        assert_eq!(bytes(3, "a"), bytes(3, "b"));
        assert_ne!(bytes(3, "c"), bytes(4, "d"));
    }

    #[test]
    fn noise_has_requested_variance() {
        let set = generate(&SynthSpec { class_signatures: vec![vec![], vec![]], ..tone_spec(2.0) }).unwrap();
        let x: Vec<f64> = set.epochs().iter().flat_map(|e| e.data().iter().map(|&v| v as f64)).collect();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var - 4.0).abs() < 0.2, "{var}");
    }

    #[test]
    fn injected_band_power_grows_with_snr() {
        // class 1 drives channel 2 in beta
        let mean_share = |snr| {
            let set = default_4class(snr, 11);
            let shares: Vec<f64> =
                set.epochs().iter().filter(|e| e.label == 1).map(|e| band_share(e.channel(2), 254.0, 1)).collect();
            shares.iter().sum::<f64>() / shares.len() as f64
        };
        let grid: Vec<f64> = [0.0, 1.0, 3.0, 10.0].into_iter().map(mean_share).collect();
        assert!(grid.windows(2).all(|w| w[0] < w[1]), "{grid:?}");
    }

    #[test]
    fn validation_errors() {
        let mut spec = tone_spec(1.0);
        spec.class_signatures[0][0].high_hz = 127.0;
        assert!(matches!(generate(&spec), Err(SynthError::NyquistViolation { .. })));
        let mut spec = tone_spec(1.0);
        spec.class_signatures[1][0].amplitude = -1.0;
        assert!(matches!(generate(&spec), Err(SynthError::Invalid(_))));
        let mut spec = tone_spec(1.0);
        spec.class_signatures.pop();
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = default_4class_spec(3.0, 9);
        let back: SynthSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn trials_split_into_rest_and_action() {
        let trials = generate_trials(&tone_spec(0.0), 1.0).unwrap();
        let set = split_rest_action(&trials, 1.0, 2.5).unwrap();
        assert_eq!(set.len(), 20);
        assert_eq!(set.epochs()[0].n_timesteps(), 254);
        assert!(set.epochs()[0].data().iter().all(|&v| v == 0.0));
        assert!(band_share(set.epochs()[1].channel(2), 254.0, 0) > 0.95);
    }
}
