//! Chroma energy: spectral power folded into twelve pitch classes.

use ndarray::Array2;

use crate::dsp::{stft_power, AudioClip, Spectrogram, StftConfig};
use crate::error::Result;

pub const N_CHROMA: usize = 12;
/// Lowest frequency (A0) that contributes to chroma.
pub const MIN_CHROMA_HZ: f64 = 27.5;

pub const PITCH_CLASS_NAMES: [&str; N_CHROMA] =
    ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

/// Pitch class of frequency `f` with C = 0 and A4 = 440 Hz at class 9.
pub fn pitch_class(f: f64) -> usize {
    let semitones_from_a = (12.0 * (f / 440.0).log2()).round() as i64;
    (semitones_from_a + 9).rem_euclid(12) as usize
}

/// Class for every linear bin, `None` below [`MIN_CHROMA_HZ`].
pub fn bin_classes(cfg: &StftConfig, sample_rate: u32) -> Vec<Option<usize>> {
    (0..cfg.n_bins())
        .map(|k| {
            let f = cfg.bin_frequency(k, sample_rate);
            (f >= MIN_CHROMA_HZ).then(|| pitch_class(f))
        })
        .collect()
}

/// `[12, n_frames]`, each non-silent column L1-normalised.
pub fn chroma_energy(clip: &AudioClip, cfg: &StftConfig) -> Result<Array2<f64>> {
    let power = stft_power(clip, cfg)?;
    Ok(chroma_from_power(&power, &bin_classes(cfg, clip.sample_rate)))
}

pub(crate) fn chroma_from_power(power: &Spectrogram, classes: &[Option<usize>]) -> Array2<f64> {
    let mut chroma = Array2::<f64>::zeros((N_CHROMA, power.n_frames()));
    for (k, class) in classes.iter().enumerate() {
        if let Some(c) = *class {
            let mut dst = chroma.row_mut(c);
            dst += &power.values.row(k);
        }
    }
    for mut col in chroma.columns_mut() {
        let total: f64 = col.sum();
        if total > 0.0 {
            col /= total;
        }
    }
    chroma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn argmax_classes(m: &Array2<f64>) -> Vec<usize> {
        m.columns()
            .into_iter()
            .map(|c| (0..N_CHROMA).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap())
            .collect()
    }

    #[test]
    fn class_mapping() {
        assert_eq!(pitch_class(440.0), 9);
        assert_eq!(pitch_class(220.0), 9);
        assert_eq!(pitch_class(261.63), 0);
        assert_eq!(pitch_class(369.99), 6);
        assert_eq!(PITCH_CLASS_NAMES[pitch_class(369.99)], "F#");
    }

    #[test]
    fn a440_and_octave() {
        let cfg = StftConfig::default();
        let a4 = chroma_energy(&synth::sine(440.0, 0.5, 1.0, 16_000), &cfg).unwrap();
        let a3 = chroma_energy(&synth::sine(220.0, 0.5, 1.0, 16_000), &cfg).unwrap();
        assert!(argmax_classes(&a4).iter().all(|&c| c == 9));
        assert!(argmax_classes(&a3).iter().all(|&c| c == 9));
    }

    #[test]
    fn amplitude_invariant() {
        let cfg = StftConfig::default();
        let loud = chroma_energy(&synth::sine(587.33, 1.0, 0.5, 16_000), &cfg).unwrap();
        let soft = chroma_energy(&synth::sine(587.33, 0.1, 0.5, 16_000), &cfg).unwrap();
        assert_eq!(argmax_classes(&loud), argmax_classes(&soft));
    }

    #[test]
    fn silence_stays_zero_and_columns_normalised() {
        let cfg = StftConfig::default();
        let s = chroma_energy(&synth::silence(0.5, 16_000), &cfg).unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
        let n = chroma_energy(&synth::CorpusSpec::default().note(1, 2, 3), &cfg).unwrap();
        for col in n.columns() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }
}
