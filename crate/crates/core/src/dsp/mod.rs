//! Signal-processing primitives: pre-emphasis, framing, windowing, FFT,
//! STFT power spectrograms and dB conversion.
//!
//! Framing pads only the tail of the signal with zeros. A clip of `len`
//! samples analysed with frame length `F` and hop `H` yields
//! `1 + ceil(max(len - F, 0) / H)` frames.

pub mod fft;
pub mod wav;

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use fft::{fft_complex, fft_real, FftPlan};

/// NSynth notes are sampled at 16 kHz.
pub const NSYNTH_SAMPLE_RATE: u32 = 16_000;

/// Mono sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub(crate) fn ensure_nonempty(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        if self.sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
    Hamming,
    Rectangular,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let denom = n as f64;
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / denom;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

/// Short-time analysis parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
    pub fft_len: usize,
    /// Pre-emphasis coefficient; only the MFCC path applies it.
    pub pre_emphasis: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 2048,
            hop: 512,
            window: Window::Hann,
            fft_len: 2048,
            pre_emphasis: 0.97,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_len == 0 {
            return Err(Error::InvalidConfig("frame_len must be positive".into()));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "hop {} must lie in [1, frame_len={}]",
                self.hop, self.frame_len
            )));
        }
        if !self.fft_len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(self.fft_len));
        }
        if self.fft_len < self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "fft_len {} is shorter than frame_len {}",
                self.fft_len, self.frame_len
            )));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::InvalidConfig(format!(
                "pre-emphasis {} outside [0, 1)",
                self.pre_emphasis
            )));
        }
        Ok(())
    }

    /// Number of half-spectrum bins.
    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn frame_count(&self, signal_len: usize) -> usize {
        frame_count(signal_len, self.frame_len, self.hop)
    }

    /// Centre frequency of linear bin `k`.
    pub fn bin_frequency(&self, k: usize, sample_rate: u32) -> f64 {
        k as f64 * sample_rate as f64 / self.fft_len as f64
    }
}

/// Frame count under tail-only zero padding (at least one frame).
pub fn frame_count(signal_len: usize, frame_len: usize, hop: usize) -> usize {
    if signal_len <= frame_len {
        1
    } else {
        1 + (signal_len - frame_len).div_ceil(hop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinAxis {
    LinearHz,
    Mel,
    Chroma,
    ContrastBand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Power,
    Decibel,
}

/// Time-frequency matrix, `values[[bin, frame]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Array2<f64>,
    pub bin_axis: BinAxis,
    pub scale: Scale,
    pub frame_hop_seconds: f64,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `out[0] = in[0]`, `out[n] = in[n] - alpha * in[n-1]`.
pub fn pre_emphasize(clip: &AudioClip, alpha: f64) -> Result<AudioClip> {
    if clip.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "pre-emphasis {alpha} outside [0, 1)"
        )));
    }
    let x = &clip.samples;
    let mut out = Vec::with_capacity(x.len());
    out.push(x[0]);
    out.extend(x.windows(2).map(|w| w[1] - alpha * w[0]));
    Ok(AudioClip::new(out, clip.sample_rate))
}

/// Splits the clip into windowed frames of `cfg.frame_len` samples.
pub fn frame_signal(clip: &AudioClip, cfg: &StftConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    clip.ensure_nonempty()?;
    let window = cfg.window.coefficients(cfg.frame_len);
    let n_frames = cfg.frame_count(clip.len());
    let frames = (0..n_frames)
        .map(|t| {
            let start = t * cfg.hop;
            (0..cfg.frame_len)
                .map(|i| clip.samples.get(start + i).copied().unwrap_or(0.0) * window[i])
                .collect()
        })
        .collect();
    Ok(frames)
}

/// Power spectrogram `|FFT(frame)|^2 / fft_len` on a linear frequency axis.
pub fn stft_power(clip: &AudioClip, cfg: &StftConfig) -> Result<Spectrogram> {
    let frames = frame_signal(clip, cfg)?;
    let plan = FftPlan::new(cfg.fft_len)?;
    let n_bins = cfg.n_bins();
    let scale = 1.0 / cfg.fft_len as f64;
    let mut values = Array2::<f64>::zeros((n_bins, frames.len()));
    for (t, frame) in frames.iter().enumerate() {
        let spectrum = plan.real_half_spectrum(frame)?;
        for (k, c) in spectrum.iter().enumerate() {
            values[[k, t]] = c.norm_sqr() * scale;
        }
    }
    Ok(Spectrogram {
        values,
        bin_axis: BinAxis::LinearHz,
        scale: Scale::Power,
        frame_hop_seconds: cfg.hop as f64 / clip.sample_rate as f64,
    })
}

/// `max(10 log10(value / reference), floor_db)` entrywise.
pub fn power_to_db(spec: &Spectrogram, reference: f64, floor_db: f64) -> Result<Spectrogram> {
    if !(reference > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "dB reference {reference} must be positive"
        )));
    }
    if !(floor_db < 0.0) {
        return Err(Error::InvalidConfig(format!(
            "dB floor {floor_db} must be negative"
        )));
    }
    Ok(Spectrogram {
        values: spec.values.mapv(|v| power_value_to_db(v, reference, floor_db)),
        scale: Scale::Decibel,
        ..spec.clone()
    })
}

pub fn power_value_to_db(value: f64, reference: f64, floor_db: f64) -> f64 {
    let db = 10.0 * (value / reference).log10();
    // NaN from 0/0 and -inf from log10(0) both clamp to the floor.
    if db.is_nan() || db < floor_db {
        floor_db
    } else {
        db
    }
}

/// Inverse of [`power_to_db`] above the floor.
pub fn db_to_power(spec: &Spectrogram, reference: f64) -> Spectrogram {
    Spectrogram {
        values: spec.values.mapv(|db| reference * 10f64.powf(db / 10.0)),
        scale: Scale::Power,
        ..spec.clone()
    }
}

/// Reference power for dB display: the clip maximum, or 1 when silent.
pub fn display_reference(spec: &Spectrogram) -> f64 {
    let max = spec.max_value();
    if max > 0.0 {
        max
    } else {
        1.0
    }
}

/// Default dB floor for displays and mel features.
pub const DEFAULT_FLOOR_DB: f64 = -80.0;
