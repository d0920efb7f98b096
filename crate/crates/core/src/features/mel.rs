//! Mel filterbank and mel spectrogram.

use ndarray::Array2;

use crate::dsp::{stft_power, AudioClip, BinAxis, Spectrogram, StftConfig};
use crate::error::{Error, Result};

/// `m(f) = 2595 log10(1 + f/700)`.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with centres equally spaced on the mel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `[n_mels, fft_len/2 + 1]`, non-negative.
    pub weights: Array2<f64>,
    pub fmin: f64,
    pub fmax: f64,
    pub fft_len: usize,
    pub sample_rate: u32,
    /// Band edges in Hz: `n_mels + 2` points, filter `m` spans
    /// `edges[m]..edges[m + 2]` and peaks at `edges[m + 1]`.
    pub edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_len: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels < 2 {
            return Err(Error::InvalidConfig(format!("n_mels {n_mels} must be at least 2")));
        }
        if !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "mel band [{fmin}, {fmax}] must satisfy 0 <= fmin < fmax <= {nyquist}"
            )));
        }
        if !fft_len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(fft_len));
        }
        let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges_hz: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = fft_len / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_len as f64;
        let weights = Array2::from_shape_fn((n_mels, n_bins), |(m, k)| {
            let f = k as f64 * bin_hz;
            let (lo, centre, hi) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
            let rising = (f - lo) / (centre - lo);
            let falling = (hi - f) / (hi - centre);
            rising.min(falling).max(0.0)
        });
        Ok(Self {
            weights,
            fmin,
            fmax,
            fft_len,
            sample_rate,
            edges_hz,
        })
    }

    /// 128 bands over `[0, sr/2]`.
    pub fn standard(cfg: &StftConfig, sample_rate: u32) -> Result<Self> {
        Self::new(128, cfg.fft_len, sample_rate, 0.0, sample_rate as f64 / 2.0)
    }

    pub fn n_mels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    /// `mel[m][t] = Σ_k w[m][k] · power[k][t]`.
    pub fn apply(&self, power: &Spectrogram) -> Result<Spectrogram> {
        if power.bin_axis != BinAxis::LinearHz || power.n_bins() != self.n_bins() {
            return Err(Error::Shape(format!(
                "filterbank expects {} linear bins, spectrogram has {} ({:?})",
                self.n_bins(),
                power.n_bins(),
                power.bin_axis
            )));
        }
        Ok(Spectrogram {
            values: self.weights.dot(&power.values),
            bin_axis: BinAxis::Mel,
            scale: power.scale,
            frame_hop_seconds: power.frame_hop_seconds,
        })
    }
}

pub fn build_mel_filterbank(
    n_mels: usize,
    fft_len: usize,
    sample_rate: u32,
    fmin: f64,
    fmax: f64,
) -> Result<MelFilterbank> {
    MelFilterbank::new(n_mels, fft_len, sample_rate, fmin, fmax)
}

pub fn mel_spectrogram(clip: &AudioClip, cfg: &StftConfig, fb: &MelFilterbank) -> Result<Spectrogram> {
    check_bank(clip, cfg, fb)?;
    fb.apply(&stft_power(clip, cfg)?)
}

pub(crate) fn check_bank(clip: &AudioClip, cfg: &StftConfig, fb: &MelFilterbank) -> Result<()> {
    if fb.fft_len != cfg.fft_len || fb.sample_rate != clip.sample_rate {
        return Err(Error::Shape(format!(
            "filterbank built for fft_len={} sr={}, analysis uses fft_len={} sr={}",
            fb.fft_len, fb.sample_rate, cfg.fft_len, clip.sample_rate
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Scale;
    use approx::assert_relative_eq;

    #[test]
    fn mel_scale_values() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert_relative_eq!(hz_to_mel(700.0), 2595.0 * 2f64.log10(), epsilon = 1e-12);
        assert_relative_eq!(hz_to_mel(700.0), 781.17, epsilon = 0.01);
        assert_relative_eq!(mel_to_hz(hz_to_mel(1234.5)), 1234.5, epsilon = 1e-9);
    }

    #[test]
    fn standard_shape_and_first_edge() {
        let fb = MelFilterbank::standard(&StftConfig::default(), 16_000).unwrap();
        assert_eq!(fb.weights.dim(), (128, 1025));
        assert_eq!(fb.edges_hz[0], 0.0);
        assert!(fb.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn filters_are_triangles_without_gaps() {
        let fb = MelFilterbank::standard(&StftConfig::default(), 16_000).unwrap();
        let bin_hz = 16_000.0 / 2048.0;
        for m in 0..fb.n_mels() {
            let row = fb.weights.row(m);
            let (lo, hi) = (fb.edges_hz[m], fb.edges_hz[m + 2]);
            let nonzero: Vec<usize> = (0..row.len()).filter(|&k| row[k] > 0.0).collect();
            assert!(!nonzero.is_empty(), "filter {m} has no bins");
            for &k in &nonzero {
                let f = k as f64 * bin_hz;
                assert!(f > lo && f < hi);
            }
            // Unimodal: non-decreasing then non-increasing.
            let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert!((1..=peak).all(|k| row[k] >= row[k - 1]));
            assert!((peak + 1..row.len()).all(|k| row[k] <= row[k - 1]));
        }
        let first = (fb.edges_hz[1] / bin_hz).ceil() as usize;
        let last = (fb.edges_hz[fb.n_mels()] / bin_hz).floor() as usize;
        for k in first..=last {
            assert!(fb.weights.column(k).sum() > 0.0, "gap at bin {k}");
        }
    }

    #[test]
    fn invalid_bands() {
        assert!(MelFilterbank::new(1, 2048, 16_000, 0.0, 8000.0).is_err());
        assert!(MelFilterbank::new(10, 2048, 16_000, 500.0, 400.0).is_err());
        assert!(MelFilterbank::new(10, 2048, 16_000, 0.0, 9000.0).is_err());
        assert!(MelFilterbank::new(10, 2048, 16_000, -1.0, 8000.0).is_err());
    }

    #[test]
    fn single_bin_spectrum_selects_column() {
        // 3 filters on an 8-point FFT at 8 Hz: bins at 0,1,2,3,4 Hz.
        let fb = MelFilterbank::new(3, 8, 8, 0.0, 4.0).unwrap();
        for k in 0..5 {
            let mut power = Array2::zeros((5, 1));
            power[[k, 0]] = 1.0;
            let spec = Spectrogram {
                values: power,
                bin_axis: BinAxis::LinearHz,
                scale: Scale::Power,
                frame_hop_seconds: 1.0,
            };
            let mel = fb.apply(&spec).unwrap();
            for m in 0..3 {
                assert_eq!(mel.values[[m, 0]], fb.weights[[m, k]]);
            }
        }
    }

    #[test]
    fn silence_and_mismatch() {
        let cfg = StftConfig::default();
        let fb = MelFilterbank::standard(&cfg, 16_000).unwrap();
        let mel = mel_spectrogram(&crate::synth::silence(0.5, 16_000), &cfg, &fb).unwrap();
        assert!(mel.values.iter().all(|&v| v == 0.0));
        let other = MelFilterbank::standard(&cfg, 22_050).unwrap();
        assert!(mel_spectrogram(&crate::synth::silence(0.5, 16_000), &cfg, &other).is_err());
    }
}
