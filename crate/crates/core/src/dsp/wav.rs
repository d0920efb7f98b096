//! 16-bit PCM mono WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, NSYNTH_SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavOptions {
    pub expected_rate: u32,
    pub allow_any_rate: bool,
}

impl Default for WavOptions {
    fn default() -> Self {
        Self {
            expected_rate: NSYNTH_SAMPLE_RATE,
            allow_any_rate: false,
        }
    }
}

/// Reads a mono 16-bit PCM file, scaling samples by `1/32768`.
pub fn read_wav(path: impl AsRef<Path>, opts: &WavOptions) -> Result<AudioClip> {
    let path = path.as_ref();
    let unsupported = |reason: String| Error::UnsupportedWav {
        path: path.to_path_buf(),
        reason,
    };
    let reader = WavReader::open(path).map_err(|e| unsupported(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unsupported(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(format!(
            "{:?} {}-bit samples, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    if !opts.allow_any_rate && spec.sample_rate != opts.expected_rate {
        return Err(unsupported(format!(
            "sample rate {} Hz, expected {} Hz",
            spec.sample_rate, opts.expected_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| unsupported(e.to_string()))?;
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Writes a clip as mono 16-bit PCM, clamping to the representable range.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let wrap = |e: hound::Error| Error::UnsupportedWav {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new(vec![0.0, 0.5, -0.5, -1.0, 32767.0 / 32768.0], 16_000);
        write_wav(&path, &clip).unwrap();
        let back = read_wav(&path, &WavOptions::default()).unwrap();
        assert_eq!(back, clip);
    }

    #[test]
    fn rejects_wrong_rate_unless_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.wav");
        write_wav(&path, &AudioClip::new(vec![0.1; 10], 44_100)).unwrap();
        assert!(matches!(
            read_wav(&path, &WavOptions::default()),
            Err(Error::UnsupportedWav { .. })
        ));
        let opts = WavOptions { allow_any_rate: true, ..Default::default() };
        assert_eq!(read_wav(&path, &opts).unwrap().sample_rate, 44_100);
    }

    #[test]
    fn rejects_stereo_and_float() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&stereo, spec).unwrap();
        for _ in 0..4 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(read_wav(&stereo, &WavOptions::default()).is_err());

        let float = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&float, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&float, &WavOptions::default()).is_err());
    }

    #[test]
    fn garbage_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.wav");
        std::fs::write(&path, b"not a riff file").unwrap();
        assert!(read_wav(&path, &WavOptions::default()).is_err());
    }
}
