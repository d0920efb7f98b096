//! Octave-band spectral contrast.
//!
//! The spectrum is split into a sub-band below 200 Hz and `n_bands` octave
//! bands starting at 200 Hz; the last octave band extends to Nyquist. For
//! each band and frame the contrast is the log ratio of the mean of the
//! strongest `alpha` fraction of bins to the mean of the weakest.

use ndarray::Array2;

use crate::dsp::{stft_power, AudioClip, Spectrogram, StftConfig};
use crate::error::{Error, Result};

pub const CONTRAST_FMIN: f64 = 200.0;
pub const CONTRAST_EPS: f64 = 1e-10;

/// Precomputed bin ranges for each contrast band.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastBands {
    pub ranges: Vec<std::ops::Range<usize>>,
    pub alpha: f64,
}

impl ContrastBands {
    pub fn new(cfg: &StftConfig, sample_rate: u32, n_bands: usize, alpha: f64) -> Result<Self> {
        if n_bands == 0 {
            return Err(Error::InvalidConfig("n_bands must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha <= 0.5) {
            return Err(Error::InvalidConfig(format!("alpha {alpha} outside (0, 0.5]")));
        }
        let n_bins = cfg.n_bins();
        let nyquist = sample_rate as f64 / 2.0;
        let mut edges = vec![0.0];
        edges.extend((0..n_bands).map(|b| CONTRAST_FMIN * 2f64.powi(b as i32)));
        if let Some(&top) = edges.last() {
            if top >= nyquist {
                return Err(Error::InvalidConfig(format!(
                    "octave band starting at {top} Hz lies above Nyquist {nyquist} Hz"
                )));
            }
        }
        let first_bin_at = |f: f64| (0..n_bins).find(|&k| cfg.bin_frequency(k, sample_rate) >= f).unwrap_or(n_bins);
        let mut ranges = Vec::with_capacity(n_bands + 1);
        for b in 0..=n_bands {
            let start = first_bin_at(edges[b]);
            let end = if b == n_bands { n_bins } else { first_bin_at(edges[b + 1]) };
            if start >= end {
                return Err(Error::InvalidConfig(format!(
                    "contrast band {b} ({} Hz upward) contains no bins at fft_len {}",
                    edges[b], cfg.fft_len
                )));
            }
            ranges.push(start..end);
        }
        Ok(Self { ranges, alpha })
    }

    pub fn n_rows(&self) -> usize {
        self.ranges.len()
    }

    pub(crate) fn apply(&self, power: &Spectrogram) -> Array2<f64> {
        let n_frames = power.n_frames();
        let mut out = Array2::zeros((self.ranges.len(), n_frames));
        let mut scratch = Vec::new();
        for (b, range) in self.ranges.iter().enumerate() {
            let n = range.len();
            let k = ((self.alpha * n as f64).round() as usize).clamp(1, n);
            for t in 0..n_frames {
                scratch.clear();
                scratch.extend(range.clone().map(|bin| power.values[[bin, t]]));
                scratch.sort_by(f64::total_cmp);
                let valley = scratch[..k].iter().sum::<f64>() / k as f64;
                let peak = scratch[n - k..].iter().sum::<f64>() / k as f64;
                out[[b, t]] = (peak + CONTRAST_EPS).ln() - (valley + CONTRAST_EPS).ln();
            }
        }
        out
    }
}

/// `[(n_bands + 1), n_frames]`.
pub fn spectral_contrast(clip: &AudioClip, cfg: &StftConfig, n_bands: usize, alpha: f64) -> Result<Array2<f64>> {
    let bands = ContrastBands::new(cfg, clip.sample_rate, n_bands, alpha)?;
    Ok(bands.apply(&stft_power(clip, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn band_layout() {
        let bands = ContrastBands::new(&StftConfig::default(), 16_000, 6, 0.02).unwrap();
        assert_eq!(bands.n_rows(), 7);
        // 7.8125 Hz bins: 200 Hz is bin 25.6 -> first bin 26.
        assert_eq!(bands.ranges[0], 0..26);
        assert_eq!(bands.ranges[1], 26..52);
        assert_eq!(bands.ranges[6].end, 1025);
    }

    #[test]
    fn rejects_bad_parameters() {
        let cfg = StftConfig::default();
        assert!(ContrastBands::new(&cfg, 16_000, 0, 0.02).is_err());
        assert!(ContrastBands::new(&cfg, 16_000, 6, 0.0).is_err());
        assert!(ContrastBands::new(&cfg, 16_000, 6, 0.6).is_err());
        // 200 * 2^6 = 12.8 kHz is above Nyquist at 16 kHz.
        assert!(ContrastBands::new(&cfg, 16_000, 7, 0.02).is_err());
        // A tiny FFT leaves the sub-200 Hz band empty.
        let tiny = StftConfig { frame_len: 32, hop: 16, fft_len: 32, ..Default::default() };
        assert!(ContrastBands::new(&tiny, 16_000, 2, 0.02).is_err());
    }

    #[test]
    fn silence_is_zero() {
        let c = spectral_contrast(&synth::silence(0.5, 16_000), &StftConfig::default(), 6, 0.02).unwrap();
        assert_eq!(c.nrows(), 7);
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_band_dominates() {
        let cfg = StftConfig::default();
        // 1 kHz falls in the 800-1600 Hz band (row 3).
        let c = spectral_contrast(&synth::sine(1000.0, 0.5, 1.0, 16_000), &cfg, 6, 0.02).unwrap();
        for t in 0..c.ncols() {
            for b in 0..c.nrows() {
                if b != 3 {
                    assert!(c[[3, t]] > c[[b, t]], "frame {t} band {b}");
                }
            }
        }
    }
}
