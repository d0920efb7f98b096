//! Musical instrument classification toolkit.
//!
//! The pipeline reads mono 16 kHz notes, extracts a fixed 168-value feature
//! row per note (harmonic percussive index, chroma, mel spectrum, MFCC,
//! spectral contrast), builds class-balanced numeric and spectrogram-image
//! datasets, trains classical and neural classifiers, and evaluates them
//! with confusion matrices, per-class metrics and power-law scaling fits.

pub mod classical;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod neural;
#[cfg(test)]
pub(crate) mod oracle;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
