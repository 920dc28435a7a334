use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{DspError, Result};
use crate::scalar::Real;

/// Downsample by spectral truncation.
///
/// The signal's DFT is cut to the bins representable at `fs_out` (an ideal
/// anti-alias low-pass at the output Nyquist) and inverted at the new length
/// `round(len × fs_out / fs_in)`. Works for non-integer ratios such as
/// 1024 → 254 Hz.
pub fn resample<T: Real>(signal: &[T], fs_in: f64, fs_out: f64) -> Result<Vec<T>> {
    if !(fs_in > 0.0 && fs_out > 0.0) {
        return Err(DspError::Invalid(format!("sampling rates must be positive ({fs_in} -> {fs_out})")));
    }
    if fs_out > fs_in {
        return Err(DspError::UpsamplingUnsupported { fs_in, fs_out });
    }
    if fs_out == fs_in || signal.is_empty() {
        return Ok(signal.to_vec());
    }
    let n = signal.len();
    let m = ((n as f64) * fs_out / fs_in).round() as usize;
    if m == 0 {
        return Ok(Vec::new());
    }

    let mut planner = FftPlanner::<T>::new();
    let mut spec: Vec<Complex<T>> = signal.iter().map(|&v| Complex::new(v, T::zero())).collect();
    planner.plan_fft_forward(n).process(&mut spec);

    let mut out = vec![Complex::new(T::zero(), T::zero()); m];
    let half = m / 2;
    // non-negative frequencies up to the output Nyquist
    out[..=half].copy_from_slice(&spec[..=half]);
    // negative frequencies
    for k in 1..m - half {
        out[m - k] = spec[n - k];
    }
    if m % 2 == 0 {
        // the output Nyquist bin folds the +/- halves together
        out[half] = spec[half] + spec[n - half];
    }

    planner.plan_fft_inverse(m).process(&mut out);
    let scale = T::one() / T::of_usize(n);
    Ok(out.into_iter().map(|c| c.re * scale).collect())
}
