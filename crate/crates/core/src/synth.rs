//! Synthetic test signals and a small synthetic instrument corpus.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dsp::AudioClip;
use crate::rng;

pub fn silence(seconds: f64, sample_rate: u32) -> AudioClip {
    AudioClip::new(vec![0.0; n_samples(seconds, sample_rate)], sample_rate)
}

pub fn sine(freq: f64, amplitude: f64, seconds: f64, sample_rate: u32) -> AudioClip {
    let sr = sample_rate as f64;
    AudioClip::new(
        (0..n_samples(seconds, sample_rate))
            .map(|i| amplitude * (2.0 * PI * freq * i as f64 / sr).sin())
            .collect(),
        sample_rate,
    )
}

/// Unit impulses every `period_seconds`, starting at sample 0.
pub fn click_train(period_seconds: f64, amplitude: f64, seconds: f64, sample_rate: u32) -> AudioClip {
    let n = n_samples(seconds, sample_rate);
    let period = (period_seconds * sample_rate as f64).round().max(1.0) as usize;
    let mut samples = vec![0.0; n];
    for i in (0..n).step_by(period) {
        samples[i] = amplitude;
    }
    AudioClip::new(samples, sample_rate)
}

/// Sample-wise sum of two clips of equal rate (truncated to the shorter).
pub fn mix(a: &AudioClip, b: &AudioClip) -> AudioClip {
    AudioClip::new(
        a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect(),
        a.sample_rate,
    )
}

fn n_samples(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

pub fn midi_to_hz(pitch: f64) -> f64 {
    440.0 * 2f64.powf((pitch - 69.0) / 12.0)
}

/// Parameters for the synthetic "instrument" corpus: each class is a
/// harmonic amplitude profile with its own envelope, and every note jitters
/// pitch, harmonic gains and noise level.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_classes: usize,
    pub n_harmonics: usize,
    pub seconds: f64,
    pub sample_rate: u32,
    /// Standard deviation of the log-gain jitter applied to each harmonic.
    pub harmonic_jitter: f64,
    /// Noise amplitude relative to the note peak.
    pub noise_level: f64,
    pub pitch_range: (f64, f64),
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_classes: 5,
            n_harmonics: 12,
            seconds: 1.0,
            sample_rate: 16_000,
            harmonic_jitter: 0.9,
            noise_level: 0.25,
            pitch_range: (45.0, 75.0),
        }
    }
}

impl CorpusSpec {
    /// Mean log-amplitude of harmonic `h` (1-based) for `class`.
    fn profile(&self, class: usize, h: usize) -> f64 {
        let h = h as f64;
        match class % 5 {
            // Bright sawtooth-like roll-off.
            0 => -h.ln(),
            // Odd harmonics dominate.
            1 => {
                if h as usize % 2 == 1 {
                    -h.ln()
                } else {
                    -h.ln() - 1.2
                }
            }
            // Dark, fast roll-off.
            2 => -1.6 * h.ln(),
            // Formant bump around the fourth harmonic.
            3 => -0.8 * h.ln() - 0.5 * ((h - 4.0) / 1.5).powi(2) + 0.5,
            // Nearly flat spectrum.
            _ => -0.4 * h.ln(),
        }
    }

    fn envelope(&self, class: usize, t: f64) -> f64 {
        let (attack, decay) = match class % 5 {
            0 => (0.01, 1.5),
            1 => (0.05, 0.8),
            2 => (0.02, 3.0),
            3 => (0.08, 1.0),
            _ => (0.005, 0.4),
        };
        let rise = (t / attack).min(1.0);
        rise * (-t / decay).exp()
    }

    /// One note of `class`, drawn from the seeded stream `(seed, index)`.
    pub fn note(&self, class: usize, seed: u64, index: u64) -> AudioClip {
        let mut rng = rng::stream(rng::derive_seed(seed, class as u64), index);
        let jitter = Normal::new(0.0, self.harmonic_jitter).expect("valid jitter");
        let pitch = rng.random_range(self.pitch_range.0..self.pitch_range.1);
        let f0 = midi_to_hz(pitch.round());
        let sr = self.sample_rate as f64;
        let nyquist = sr / 2.0;
        let harmonics: Vec<(f64, f64, f64)> = (1..=self.n_harmonics)
            .filter(|&h| f0 * h as f64 <= nyquist * 0.95)
            .map(|h| {
                let gain = (self.profile(class, h) + jitter.sample(&mut rng)).exp();
                let phase = rng.random_range(0.0..2.0 * PI);
                (f0 * h as f64, gain, phase)
            })
            .collect();
        let n = n_samples(self.seconds, self.sample_rate);
        let mut samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                let tone: f64 = harmonics
                    .iter()
                    .map(|&(f, g, p)| g * (2.0 * PI * f * t + p).sin())
                    .sum();
                tone * self.envelope(class, t)
            })
            .collect();
        let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        let noise_scale = self.noise_level * rng.random_range(0.5..1.5);
        for s in &mut samples {
            *s = 0.5 * *s / peak + noise_scale * 0.5 * rng.random_range(-1.0..1.0);
        }
        AudioClip::new(samples, self.sample_rate)
    }
}

/// A labelled set with an image modality and a numeric modality.
///
/// Class `c` lights a 3x3 patch at its own position in an otherwise noisy
/// single-channel image and shifts numeric feature `c mod d` by
/// `separation`. Either modality alone identifies the class; setting
/// `image_signal` or `numeric_signal` to false replaces that modality with
/// pure noise.
#[derive(Debug, Clone)]
pub struct DualModalitySpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub image_size: usize,
    pub n_features: usize,
    pub separation: f64,
    pub noise: f64,
    pub image_signal: bool,
    pub numeric_signal: bool,
}

impl Default for DualModalitySpec {
    fn default() -> Self {
        Self {
            n_classes: 4,
            per_class: 100,
            image_size: 10,
            n_features: 8,
            separation: 3.0,
            noise: 0.5,
            image_signal: true,
            numeric_signal: true,
        }
    }
}

impl DualModalitySpec {
    /// Samples are interleaved by class; feature rows are stored in reverse
    /// order so callers must align by id.
    pub fn generate(&self, seed: u64) -> crate::neural::DualInputSet {
        assert!(self.image_size >= 3 && self.n_classes >= 1 && self.n_features >= 1);
        let n = self.n_classes * self.per_class;
        let s = self.image_size;
        let mut rng = rng::stream(seed, 0);
        let noise = Normal::new(0.0, self.noise).expect("finite noise");
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        // Patch corners spread over the free positions in row-major order.
        let free = (s - 2) * (s - 2);
        let corner = |c: usize| {
            let p = c * (free - 1) / self.n_classes.saturating_sub(1).max(1);
            (p / (s - 2), p % (s - 2))
        };
        let mut images = ndarray::Array4::<f64>::zeros((n, 1, s, s));
        let mut features = ndarray::Array2::<f64>::zeros((n, self.n_features));
        let mut labels = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % self.n_classes;
            labels.push(c);
            ids.push(format!("s{i:05}"));
            images.index_axis_mut(ndarray::Axis(0), i).mapv_inplace(|_| noise.sample(&mut rng));
            if self.image_signal {
                let (r, q) = corner(c);
                images.slice_mut(ndarray::s![i, 0, r..r + 3, q..q + 3]).mapv_inplace(|v| v + 1.0);
            }
            features.row_mut(i).mapv_inplace(|_| unit.sample(&mut rng));
            if self.numeric_signal {
                features[[i, c % self.n_features]] += self.separation;
            }
        }
        let rev: Vec<usize> = (0..n).rev().collect();
        crate::neural::DualInputSet {
            image_ids: ids.clone(),
            images: images.into_dyn(),
            feature_ids: rev.iter().map(|&i| ids[i].clone()).collect(),
            features: features.select(ndarray::Axis(0), &rev),
            labels,
        }
    }
}
