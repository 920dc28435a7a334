use super::{DspError, Result};
use crate::data::{Epoch, Interval};

/// `(width, hop, count)` in samples for windows of `width_s` with `overlap_frac`
/// overlap over `n` samples. The hop is rounded down to whole samples; a
/// trailing partial window is dropped.
pub fn window_plan(n: usize, fs: f64, width_s: f64, overlap_frac: f64) -> Result<(usize, usize, usize)> {
    if !(0.0..1.0).contains(&overlap_frac) {
        return Err(DspError::Invalid(format!("overlap fraction {overlap_frac} outside [0, 1)")));
    }
    let width = (width_s * fs).round() as usize;
    if width == 0 {
        return Err(DspError::Invalid(format!("window of {width_s} s has no samples at {fs} Hz")));
    }
    if width > n {
        return Err(DspError::WindowTooLong { width, len: n });
    }
    let hop = (((width as f64) * (1.0 - overlap_frac)) + 1e-9).floor().max(1.0) as usize;
    Ok((width, hop, (n - width) / hop + 1))
}

/// Cut an epoch into overlapping windows tagged with their time span.
pub fn sliding_windows(epoch: &Epoch, fs: f64, width_s: f64, overlap_frac: f64) -> Result<Vec<Epoch>> {
    let (width, hop, count) = window_plan(epoch.n_timesteps(), fs, width_s, overlap_frac)?;
    Ok((0..count)
        .map(|k| {
            let start = k * hop;
            let iv = Interval::Window { start_s: start as f64 / fs, end_s: (start + width) as f64 / fs };
            epoch.slice_time(start, start + width, iv)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_epoch(n_ch: usize, n_t: usize) -> Epoch {
        let data = (0..n_ch * n_t).map(|v| v as f32).collect();
        Epoch::new(data, n_ch, n_t, 1, Interval::Action).unwrap()
    }

    /// Enumerate every start position whose window fits.
    fn enumerate_windows(n: usize, width: usize, hop: usize) -> usize {
        (0..n).step_by(hop).filter(|s| s + width <= n).count()
    }

    #[test]
    fn action_interval_gives_nine_windows() {
        let w = sliding_windows(&ramp_epoch(2, 640), 256.0, 0.5, 0.5).unwrap();
        assert_eq!(w.len(), 9);
        for (k, win) in w.iter().enumerate() {
            match win.interval {
                Interval::Window { start_s, end_s } => {
                    assert!((start_s - 0.25 * k as f64).abs() < 1e-12);
                    assert!((end_s - start_s - 0.5).abs() < 1e-12);
                }
                _ => panic!(),
            }
        }
        assert_eq!(sliding_windows(&ramp_epoch(2, 635), 254.0, 0.5, 0.5).unwrap().len(), 9);
    }

    #[test]
    fn full_width_is_one_window() {
        assert_eq!(sliding_windows(&ramp_epoch(1, 381), 254.0, 1.5, 0.5).unwrap().len(), 1);
    }

    #[test]
    fn rest_epoch_count_matches_enumeration() {
        let (width, hop, count) = window_plan(381, 254.0, 0.5, 0.5).unwrap();
        assert_eq!(width, 127);
        assert_eq!(count, enumerate_windows(381, width, hop));
        assert_eq!(count, 5);
    }

    #[test]
    fn too_long() {
        assert!(matches!(
            sliding_windows(&ramp_epoch(1, 100), 254.0, 0.5, 0.5),
            Err(DspError::WindowTooLong { width: 127, len: 100 })
        ));
    }

    proptest! {
        #[test]
        fn leading_halves_reconstruct_prefix(n in 20usize..400, width_samples in 2usize..20) {
            let fs = 100.0;
            let width_s = width_samples as f64 / fs;
            let e = ramp_epoch(2, n);
            let wins = sliding_windows(&e, fs, width_s, 0.5).unwrap();
            let (_, hop, count) = window_plan(n, fs, width_s, 0.5).unwrap();
            prop_assert_eq!(count, enumerate_windows(n, width_samples, hop));
            for c in 0..2 {
                let rebuilt: Vec<f32> = wins.iter().flat_map(|w| w.channel(c)[..hop].to_vec()).collect();
                prop_assert_eq!(&rebuilt[..], &e.channel(c)[..rebuilt.len()]);
            }
        }
    }
}
