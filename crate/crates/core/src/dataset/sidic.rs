//! Spectrogram images: linear-frequency dB STFT rendered as bare 8-bit
//! grayscale PNGs of 775x308 pixels.
//!
//! Time runs left to right and frequency bottom to top. dB values relative
//! to the clip maximum are mapped linearly from `[-80, 0]` to `[0, 255]`.
//! The spectrogram is resampled bilinearly with pixel centres at
//! `(i + 0.5) * src / dst - 0.5`.

use std::path::Path;

use image::{GrayImage, Luma};
use ndarray::Array2;

use super::nufdic::{check_failures, par_over_manifest, wav_path};
use super::{BuildOptions, BuildSummary, DatasetManifest};
use crate::dsp::wav::read_wav;
use crate::dsp::{display_reference, power_to_db, stft_power, AudioClip, StftConfig, DEFAULT_FLOOR_DB};
use crate::error::{Error, Result};

pub const SIDIC_WIDTH: u32 = 775;
pub const SIDIC_HEIGHT: u32 = 308;

fn sample_position(dst: usize, dst_len: usize, src_len: usize) -> (usize, usize, f64) {
    let pos = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

/// Renders a clip as a SIDIC image.
pub fn spectrogram_image(clip: &AudioClip, cfg: &StftConfig) -> Result<GrayImage> {
    let power = stft_power(clip, cfg)?;
    let db = power_to_db(&power, display_reference(&power), DEFAULT_FLOOR_DB)?;
    Ok(db_to_image(&db.values, DEFAULT_FLOOR_DB, SIDIC_WIDTH, SIDIC_HEIGHT))
}

/// `values[[bin, frame]]` in dB, bin 0 at the bottom of the image.
pub fn db_to_image(values: &Array2<f64>, floor_db: f64, width: u32, height: u32) -> GrayImage {
    let (n_bins, n_frames) = values.dim();
    let cols: Vec<_> = (0..width as usize).map(|x| sample_position(x, width as usize, n_frames)).collect();
    let rows: Vec<_> = (0..height as usize).map(|y| sample_position(y, height as usize, n_bins)).collect();
    GrayImage::from_fn(width, height, |x, y| {
        let (b0, b1, fb) = rows[(height - 1 - y) as usize];
        let (t0, t1, ft) = cols[x as usize];
        let lerp = |b: usize| values[[b, t0]] * (1.0 - ft) + values[[b, t1]] * ft;
        let db = lerp(b0) * (1.0 - fb) + lerp(b1) * fb;
        let level = ((db - floor_db) / -floor_db).clamp(0.0, 1.0);
        Luma([(level * 255.0).round() as u8])
    })
}

/// Renders one PNG per manifest record into `out_dir` and writes
/// `out_dir/manifest.csv`.
pub fn render_sidic(
    manifest: &DatasetManifest,
    wav_dir: impl AsRef<Path>,
    cfg: &StftConfig,
    out_dir: impl AsRef<Path>,
    opts: &BuildOptions,
) -> Result<BuildSummary> {
    let (wav_dir, out_dir) = (wav_dir.as_ref(), out_dir.as_ref());
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results = par_over_manifest(manifest, opts.jobs, |record| {
        let clip = read_wav(wav_path(wav_dir, &record.file_id), &opts.wav)?;
        let img = spectrogram_image(&clip, cfg)?;
        img.save(out_dir.join(format!("{}.png", record.file_id)))?;
        Ok(())
    })?;
    let mut kept = Vec::new();
    let mut failures = Vec::new();
    for (record, result) in manifest.records.iter().zip(results) {
        match result {
            Ok(()) => kept.push(record.clone()),
            Err(e) => failures.push((record.file_id.clone(), e.to_string())),
        }
    }
    check_failures("sidic", manifest.len(), &failures, opts.max_failure_fraction)?;
    DatasetManifest {
        records: kept,
        ..manifest.clone()
    }
    .write_csv(out_dir.join("manifest.csv"))?;
    Ok(BuildSummary {
        rows_written: manifest.len() - failures.len(),
        failures,
    })
}

/// Loads a SIDIC PNG as `[height, width]` values in `[0, 1]`, area-averaged
/// down by `factor` (partial edge blocks average what they cover).
pub fn load_sidic_image(path: impl AsRef<Path>, factor: u32) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let img = image::open(path)?.into_luma8();
    Ok(downscale(&img, factor.max(1)))
}

pub fn downscale(img: &GrayImage, factor: u32) -> Array2<f64> {
    let (w, h) = img.dimensions();
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    Array2::from_shape_fn((oh as usize, ow as usize), |(by, bx)| {
        let (x0, y0) = (bx as u32 * factor, by as u32 * factor);
        let (x1, y1) = ((x0 + factor).min(w), (y0 + factor).min(h));
        let mut sum = 0.0;
        for y in y0..y1 {
            for x in x0..x1 {
                sum += f64::from(img.get_pixel(x, y)[0]);
            }
        }
        sum / (255.0 * f64::from((x1 - x0) * (y1 - y0)))
    })
}
