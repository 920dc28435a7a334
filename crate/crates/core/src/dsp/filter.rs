//! Butterworth and notch IIR filters as cascaded second-order sections,
//! applied forward-backward for zero phase.

use rustfft::num_complex::Complex;

use super::{DspError, Result};
use crate::scalar::Real;

/// Direct-form II transposed biquad, `a0` normalized to 1.
/// First-order sections use `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad<T> {
    pub b: [T; 3],
    pub a: [T; 2],
}

impl<T: Real> Biquad<T> {
    fn dc_gain(&self) -> T {
        (self.b[0] + self.b[1] + self.b[2]) / (T::one() + self.a[0] + self.a[1])
    }

    /// Steady-state delay line for a unit step input.
    fn step_state(&self) -> [T; 2] {
        let y = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * y;
        let z1 = self.b[1] - self.a[0] * y + z2;
        [z1, z2]
    }

    /// Complex response at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex<f64> {
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0].as_f64() + z1 * self.b[1].as_f64() + z2 * self.b[2].as_f64();
        let den = 1.0 + z1 * self.a[0].as_f64() + z2 * self.a[1].as_f64();
        num / den
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos<T> {
    pub sections: Vec<Biquad<T>>,
}

#[derive(Clone, Copy)]
enum Kind {
    Low,
    High,
}

fn butter<T: Real>(order: usize, fc: f64, fs: f64, kind: Kind) -> Sos<T> {
    let k = (std::f64::consts::PI * fc / fs).tan();
    let mut sections = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        // pole angle from the negative real axis
        let phi = std::f64::consts::PI * (order - 1 - 2 * i) as f64 / (2 * order) as f64;
        let q = 1.0 / (2.0 * phi.cos());
        let norm = 1.0 / (1.0 + k / q + k * k);
        let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
        let b = match kind {
            Kind::Low => [k * k * norm, 2.0 * k * k * norm, k * k * norm],
            Kind::High => [norm, -2.0 * norm, norm],
        };
        sections.push(Biquad { b: b.map(T::lit), a: a.map(T::lit) });
    }
    if order % 2 == 1 {
        let a1 = (k - 1.0) / (k + 1.0);
        let b = match kind {
            Kind::Low => [k / (1.0 + k), k / (1.0 + k), 0.0],
            Kind::High => [1.0 / (1.0 + k), -1.0 / (1.0 + k), 0.0],
        };
        sections.push(Biquad { b: b.map(T::lit), a: [T::lit(a1), T::zero()] });
    }
    Sos { sections }
}

impl<T: Real> Sos<T> {
    pub fn butter_lowpass(order: usize, fc: f64, fs: f64) -> Self {
        butter(order, fc, fs, Kind::Low)
    }

    pub fn butter_highpass(order: usize, fc: f64, fs: f64) -> Self {
        butter(order, fc, fs, Kind::High)
    }

    /// Highpass at `low` cascaded with lowpass at `high`, each of `order`.
    pub fn butter_bandpass(order: usize, low: f64, high: f64, fs: f64) -> Self {
        let mut sos = Self::butter_highpass(order, low, fs);
        sos.sections.extend(Self::butter_lowpass(order, high, fs).sections);
        sos
    }

    /// Second-order notch with quality factor `q` (bandwidth `f0 / q`).
    pub fn notch(f0: f64, q: f64, fs: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        let c = -2.0 * w0.cos() / a0;
        let b = [1.0 / a0, c, 1.0 / a0];
        let a = [c, (1.0 - alpha) / a0];
        Sos { sections: vec![Biquad { b: b.map(T::lit), a: a.map(T::lit) }] }
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / fs;
        self.sections.iter().map(|s| s.response(w)).product::<Complex<f64>>().norm()
    }

    /// Causal filtering, delay lines initialized to the steady state of `x[0]`.
    fn run(&self, x: &mut [T]) {
        let mut gain = T::one();
        let x0 = x.first().copied().unwrap_or_else(T::zero);
        for s in &self.sections {
            let [mut z1, mut z2] = s.step_state().map(|z| z * x0 * gain);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b[0] * input + z1;
                z1 = s.b[1] * input - s.a[0] * y + z2;
                z2 = s.b[2] * input - s.a[1] * y;
                *v = y;
            }
            gain *= s.dc_gain();
        }
    }

    fn forward_backward(&self, x: &mut [T]) {
        self.run(x);
        x.reverse();
        self.run(x);
        x.reverse();
    }

    /// Zero-phase filtering.
    ///
    /// The signal is odd-extended at both ends, filtered forward-backward and
    /// backward-forward, and the two results are averaged. The average makes
    /// the operator commute exactly with time reversal; either pass alone has
    /// magnitude response `|H|²` and zero phase.
    pub fn filtfilt(&self, x: &[T]) -> Vec<T> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let two = T::lit(2.0);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| two * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| two * x[n - 1] - x[n - 1 - i]));

        let mut fb = ext.clone();
        self.forward_backward(&mut fb);
        let mut bf = ext;
        bf.reverse();
        self.forward_backward(&mut bf);
        bf.reverse();

        let half = T::lit(0.5);
        fb[pad..pad + n].iter().zip(&bf[pad..pad + n]).map(|(&a, &b)| half * (a + b)).collect()
    }
}

fn check_length(len: usize, order: usize) -> Result<()> {
    let min = 3 * order;
    if len <= min {
        return Err(DspError::SignalTooShort { len, min });
    }
    Ok(())
}

/// Zero-phase Butterworth bandpass (`order` per edge).
pub fn bandpass_filter<T: Real>(signal: &[T], fs: f64, low: f64, high: f64, order: usize) -> Result<Vec<T>> {
    if !(low > 0.0 && low < high && high < fs / 2.0) || order == 0 {
        return Err(DspError::InvalidBandEdges { low, high, fs });
    }
    check_length(signal.len(), order)?;
    Ok(Sos::butter_bandpass(order, low, high, fs).filtfilt(signal))
}

pub fn lowpass_filter<T: Real>(signal: &[T], fs: f64, cutoff: f64, order: usize) -> Result<Vec<T>> {
    if !(cutoff > 0.0 && cutoff < fs / 2.0) || order == 0 {
        return Err(DspError::InvalidBandEdges { low: 0.0, high: cutoff, fs });
    }
    check_length(signal.len(), order)?;
    Ok(Sos::butter_lowpass(order, cutoff, fs).filtfilt(signal))
}

pub fn highpass_filter<T: Real>(signal: &[T], fs: f64, cutoff: f64, order: usize) -> Result<Vec<T>> {
    if !(cutoff > 0.0 && cutoff < fs / 2.0) || order == 0 {
        return Err(DspError::InvalidBandEdges { low: cutoff, high: fs / 2.0, fs });
    }
    check_length(signal.len(), order)?;
    Ok(Sos::butter_highpass(order, cutoff, fs).filtfilt(signal))
}

/// Zero-phase notch at `f0` with quality `quality`.
pub fn notch_filter<T: Real>(signal: &[T], fs: f64, f0: f64, quality: f64) -> Result<Vec<T>> {
    if !(f0 > 0.0 && f0 < fs / 2.0) || !(quality > 0.0) {
        return Err(DspError::InvalidFrequency { f0, fs });
    }
    check_length(signal.len(), 2)?;
    Ok(Sos::notch(f0, quality, fs).filtfilt(signal))
}
