//! Median-filter harmonic/percussive separation and the harmonic
//! percussive index (HPI).
//!
//! Harmonic energy is smooth along time, so a median across frames keeps it
//! and rejects transients; percussive energy is smooth along frequency.
//! Soft masks `H^p / (H^p + P^p)` split the input so the two parts sum back
//! to it exactly.

use ndarray::{Array2, ArrayView1, ArrayViewMut1};

use crate::dsp::{stft_power, AudioClip, Scale, Spectrogram, StftConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpssConfig {
    pub kernel_time: usize,
    pub kernel_freq: usize,
    pub mask_exponent: f64,
}

impl Default for HpssConfig {
    fn default() -> Self {
        Self {
            kernel_time: 31,
            kernel_freq: 31,
            mask_exponent: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpssResult {
    pub harmonic: Spectrogram,
    pub percussive: Spectrogram,
    pub mask_exponent: f64,
}

/// Median over a window of `kernel` samples centred on each element. The
/// window is truncated at the edges.
fn median_filter_1d(src: ArrayView1<f64>, mut dst: ArrayViewMut1<f64>, kernel: usize, scratch: &mut Vec<f64>) {
    let n = src.len();
    let half = kernel / 2;
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        scratch.clear();
        scratch.extend(src.slice(ndarray::s![lo..hi]).iter().copied());
        let m = scratch.len();
        let mid = m / 2;
        let (_, upper, _) = scratch.select_nth_unstable_by(mid, f64::total_cmp);
        let upper = *upper;
        dst[i] = if m % 2 == 1 {
            upper
        } else {
            let lower = scratch[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lower + upper)
        };
    }
}

/// Median along time, one frequency row at a time.
pub fn median_filter_time(values: &Array2<f64>, kernel: usize) -> Array2<f64> {
    let mut out = Array2::zeros(values.raw_dim());
    let mut scratch = Vec::with_capacity(kernel);
    for (src, dst) in values.rows().into_iter().zip(out.rows_mut()) {
        median_filter_1d(src, dst, kernel, &mut scratch);
    }
    out
}

/// Median along frequency, one frame at a time.
pub fn median_filter_freq(values: &Array2<f64>, kernel: usize) -> Array2<f64> {
    let mut out = Array2::zeros(values.raw_dim());
    let mut scratch = Vec::with_capacity(kernel);
    for (src, dst) in values.columns().into_iter().zip(out.columns_mut()) {
        median_filter_1d(src, dst, kernel, &mut scratch);
    }
    out
}

pub fn hpss(spec: &Spectrogram, cfg: &HpssConfig) -> Result<HpssResult> {
    for (name, k) in [("time", cfg.kernel_time), ("frequency", cfg.kernel_freq)] {
        if k < 3 || k % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "{name} kernel {k} must be odd and at least 3"
            )));
        }
    }
    if !(cfg.mask_exponent > 0.0) {
        return Err(Error::InvalidConfig("mask exponent must be positive".into()));
    }
    if spec.scale != Scale::Power {
        return Err(Error::InvalidConfig("hpss expects a power spectrogram".into()));
    }
    let smooth_time = median_filter_time(&spec.values, cfg.kernel_time);
    let smooth_freq = median_filter_freq(&spec.values, cfg.kernel_freq);
    let p = cfg.mask_exponent;
    let mut harmonic = Array2::zeros(spec.values.raw_dim());
    let mut percussive = Array2::zeros(spec.values.raw_dim());
    ndarray::Zip::from(&mut harmonic)
        .and(&mut percussive)
        .and(&spec.values)
        .and(&smooth_time)
        .and(&smooth_freq)
        .for_each(|h, q, &s, &ht, &pf| {
            let (hp, pp) = (ht.powf(p), pf.powf(p));
            let denom = hp + pp;
            let mask = if denom > 0.0 { hp / denom } else { 0.5 };
            *h = mask * s;
            *q = s - *h;
        });
    let wrap = |values| Spectrogram {
        values,
        ..spec.clone()
    };
    Ok(HpssResult {
        harmonic: wrap(harmonic),
        percussive: wrap(percussive),
        mask_exponent: p,
    })
}

/// Harmonic energy fraction in `[0, 1]`; 0.5 for a silent clip.
pub fn harmonic_percussive_index(clip: &AudioClip, cfg: &StftConfig) -> Result<f64> {
    let power = stft_power(clip, cfg)?;
    hpi_from_power(&power, &HpssConfig::default())
}

pub(crate) fn hpi_from_power(power: &Spectrogram, cfg: &HpssConfig) -> Result<f64> {
    let parts = hpss(power, cfg)?;
    let h = parts.harmonic.values.sum();
    let p = parts.percussive.values.sum();
    let total = h + p;
    Ok(if total > 0.0 { (h / total).clamp(0.0, 1.0) } else { 0.5 })
}
