//! Mel-frequency cepstral coefficients.
//!
//! Pipeline: pre-emphasis, framing and windowing, FFT power, mel filterbank,
//! natural log with an additive floor, orthonormal DCT-II, truncation to the
//! first `n_mfcc` coefficients, then per-coefficient mean removal over frames.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};

use super::mel::{check_bank, MelFilterbank};
use crate::dsp::{pre_emphasize, stft_power, AudioClip, StftConfig};
use crate::error::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-10;

/// Orthonormal DCT-II basis, `[n, n]`, row `k` is the k-th cosine.
pub fn dct2_matrix(n: usize) -> Array2<f64> {
    let nf = n as f64;
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * nf)).cos()
    })
}

/// `[n_mfcc, n_frames]` with zero-mean rows.
pub fn mfcc(clip: &AudioClip, cfg: &StftConfig, fb: &MelFilterbank, n_mfcc: usize) -> Result<Array2<f64>> {
    check_bank(clip, cfg, fb)?;
    if n_mfcc == 0 || n_mfcc > fb.n_mels() {
        return Err(Error::InvalidConfig(format!(
            "n_mfcc {n_mfcc} must lie in [1, n_mels={}]",
            fb.n_mels()
        )));
    }
    let emphasized = pre_emphasize(clip, cfg.pre_emphasis)?;
    let mel = fb.apply(&stft_power(&emphasized, cfg)?)?;
    Ok(mfcc_from_mel_power(&mel.values, n_mfcc))
}

pub(crate) fn mfcc_from_mel_power(mel: &Array2<f64>, n_mfcc: usize) -> Array2<f64> {
    let log_mel = mel.mapv(|v| (v + LOG_FLOOR).ln());
    let dct = dct2_matrix(mel.nrows());
    let mut coeffs = dct.slice(ndarray::s![..n_mfcc, ..]).dot(&log_mel);
    let means = coeffs.mean_axis(Axis(1)).expect("at least one frame");
    for (mut row, mean) in coeffs.rows_mut().into_iter().zip(means.iter()) {
        row -= *mean;
    }
    coeffs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn dct_is_orthonormal() {
        let d = dct2_matrix(128);
        let gram = d.dot(&d.t());
        for i in 0..128 {
            for j in 0..128 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn silence_gives_zero_matrix() {
        let cfg = StftConfig::default();
        let fb = MelFilterbank::standard(&cfg, 16_000).unwrap();
        let m = mfcc(&synth::silence(1.0, 16_000), &cfg, &fb, 20).unwrap();
        assert_eq!(m.nrows(), 20);
        assert!(m.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rows_are_zero_mean() {
        let cfg = StftConfig::default();
        let fb = MelFilterbank::standard(&cfg, 16_000).unwrap();
        let clip = synth::CorpusSpec::default().note(3, 1, 1);
        let m = mfcc(&clip, &cfg, &fb, 20).unwrap();
        for row in m.rows() {
            assert!(row.mean().unwrap().abs() < 1e-9);
        }
        assert!(m.iter().any(|v| v.abs() > 1e-3));
    }

    #[test]
    fn rejects_too_many_coefficients() {
        let cfg = StftConfig::default();
        let fb = MelFilterbank::new(16, 2048, 16_000, 0.0, 8000.0).unwrap();
        assert!(mfcc(&synth::silence(0.2, 16_000), &cfg, &fb, 17).is_err());
    }
}
