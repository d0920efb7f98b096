//! The five note-level features and their aggregation into one fixed
//! 168-value row.
//!
//! Row layout, in order:
//!
//! | offset | len | content                                   |
//! |--------|-----|-------------------------------------------|
//! | 0      | 1   | harmonic percussive index                 |
//! | 1      | 12  | mean chroma energy, C..B                  |
//! | 13     | 128 | mean mel power in dB (ref = clip max)     |
//! | 141    | 20  | mean MFCC (mean-normalised per frame row) |
//! | 161    | 7   | mean spectral contrast, low to high band  |

pub mod chroma;
pub mod contrast;
pub mod hpss;
pub mod mel;
pub mod mfcc;

use ndarray::Array2;

pub use chroma::{chroma_energy, pitch_class, N_CHROMA};
pub use contrast::{spectral_contrast, ContrastBands};
pub use hpss::{harmonic_percussive_index, hpss, HpssConfig, HpssResult};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_spectrogram, mel_to_hz, MelFilterbank};
pub use mfcc::{dct2_matrix, mfcc};

use crate::dsp::{display_reference, power_to_db, pre_emphasize, stft_power, AudioClip, StftConfig, DEFAULT_FLOOR_DB};
use crate::error::{Error, Result};

pub const N_MELS: usize = 128;
pub const N_MFCC: usize = 20;
pub const N_CONTRAST_BANDS: usize = 6;
pub const CONTRAST_ALPHA: f64 = 0.02;
pub const FEATURE_LEN: usize = 1 + N_CHROMA + N_MELS + N_MFCC + N_CONTRAST_BANDS + 1;

pub const HPI_OFFSET: usize = 0;
pub const CHROMA_OFFSET: usize = 1;
pub const MEL_OFFSET: usize = CHROMA_OFFSET + N_CHROMA;
pub const MFCC_OFFSET: usize = MEL_OFFSET + N_MELS;
pub const CONTRAST_OFFSET: usize = MFCC_OFFSET + N_MFCC;

/// One note's aggregated features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn hpi(&self) -> f64 {
        self.0[HPI_OFFSET]
    }

    pub fn chroma(&self) -> &[f64] {
        &self.0[CHROMA_OFFSET..MEL_OFFSET]
    }

    pub fn mel(&self) -> &[f64] {
        &self.0[MEL_OFFSET..MFCC_OFFSET]
    }

    pub fn mfcc(&self) -> &[f64] {
        &self.0[MFCC_OFFSET..CONTRAST_OFFSET]
    }

    pub fn contrast(&self) -> &[f64] {
        &self.0[CONTRAST_OFFSET..]
    }
}

/// Column names of a feature row.
pub fn feature_names() -> Vec<String> {
    let mut names = vec!["hpi".to_string()];
    names.extend((0..N_CHROMA).map(|i| format!("chroma_{i}")));
    names.extend((0..N_MELS).map(|i| format!("mel_{i}")));
    names.extend((0..N_MFCC).map(|i| format!("mfcc_{i}")));
    names.extend((0..=N_CONTRAST_BANDS).map(|i| format!("contrast_{i}")));
    names
}

/// Reusable extractor holding the precomputed filterbank, chroma map and
/// contrast bands for one `(StftConfig, sample_rate)` pair.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub cfg: StftConfig,
    pub sample_rate: u32,
    pub hpss: HpssConfig,
    mel_bank: MelFilterbank,
    chroma_classes: Vec<Option<usize>>,
    contrast_bands: ContrastBands,
}

impl FeatureExtractor {
    pub fn new(cfg: StftConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            sample_rate,
            hpss: HpssConfig::default(),
            mel_bank: MelFilterbank::standard(&cfg, sample_rate)?,
            chroma_classes: chroma::bin_classes(&cfg, sample_rate),
            contrast_bands: ContrastBands::new(&cfg, sample_rate, N_CONTRAST_BANDS, CONTRAST_ALPHA)?,
        })
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureVector> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::InvalidConfig(format!(
                "extractor built for {} Hz, clip is {} Hz",
                self.sample_rate, clip.sample_rate
            )));
        }
        let power = stft_power(clip, &self.cfg)?;

        let hpi = hpss::hpi_from_power(&power, &self.hpss)?;
        let chroma = chroma::chroma_from_power(&power, &self.chroma_classes);
        let mel = self.mel_bank.apply(&power)?;
        let mel_db = power_to_db(&mel, display_reference(&mel), DEFAULT_FLOOR_DB)?;
        let emphasized = stft_power(&pre_emphasize(clip, self.cfg.pre_emphasis)?, &self.cfg)?;
        let mfcc = mfcc::mfcc_from_mel_power(&self.mel_bank.apply(&emphasized)?.values, N_MFCC);
        let contrast = self.contrast_bands.apply(&power);

        let mut row = Vec::with_capacity(FEATURE_LEN);
        row.push(hpi);
        for block in [&chroma, &mel_db.values, &mfcc, &contrast] {
            row.extend(row_means(block));
        }
        debug_assert_eq!(row.len(), FEATURE_LEN);
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("feature {} is not finite", feature_names()[i])));
        }
        Ok(FeatureVector(row))
    }
}

fn row_means(m: &Array2<f64>) -> impl Iterator<Item = f64> + '_ {
    let n = m.ncols() as f64;
    m.rows().into_iter().map(move |r| r.sum() / n)
}

pub fn extract_feature_vector(clip: &AudioClip, cfg: &StftConfig) -> Result<FeatureVector> {
    FeatureExtractor::new(*cfg, clip.sample_rate)?.extract(clip)
}

/// Formats like C's `%.9g`.
pub fn format_sig9(v: f64) -> String {
    const DIGITS: i32 = 9;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= DIGITS {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
