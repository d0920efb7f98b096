//! Report writers: accuracy tables, confusion matrices and heatmaps.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};

use super::{fit_power_curve, ConfusionMatrix, ExperimentResult, PowerCurveFit};
use crate::error::{Error, Result};

fn percent(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Markdown table with one row per model and one column per per-class
/// size; cells are test accuracy in percent, `mean ± std` when repeated.
pub fn accuracy_table_markdown(results: &[ExperimentResult]) -> String {
    let sizes: BTreeSet<usize> = results.iter().map(|r| r.per_class_samples).collect();
    let mut models: Vec<(&str, &str)> = Vec::new();
    for r in results {
        let key = (r.model_name.as_str(), r.dataset_name.as_str());
        if !models.contains(&key) {
            models.push(key);
        }
    }
    let mut out = String::from("| Model | Dataset |");
    for s in &sizes {
        let _ = write!(out, " {s} |");
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|".repeat(sizes.len()));
    out.push('\n');
    for (model, dataset) in models {
        let _ = write!(out, "| {model} | {dataset} |");
        for &s in &sizes {
            let cell = results
                .iter()
                .find(|r| r.model_name == model && r.dataset_name == dataset && r.per_class_samples == s)
                .map(|r| match r.std_accuracy {
                    Some(sd) => format!("{} ± {}", percent(r.mean_accuracy), percent(sd)),
                    None => percent(r.mean_accuracy),
                })
                .unwrap_or_else(|| "-".into());
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

/// One CSV row per experiment result. Empty cells mean "not applicable".
/// Wall-clock time is left out so reruns produce identical files.
pub fn write_results_csv(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model",
        "dataset",
        "per_class",
        "repeats",
        "test_accuracy_mean",
        "test_accuracy_std",
        "valid_accuracy_mean",
        "valid_accuracy_std",
    ])?;
    for r in results {
        w.write_record([
            r.model_name.clone(),
            r.dataset_name.clone(),
            r.per_class_samples.to_string(),
            r.repeats.to_string(),
            format!("{:.9}", r.mean_accuracy),
            opt(r.std_accuracy),
            opt(r.valid_mean_accuracy),
            opt(r.valid_std_accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Power fit of mean test accuracy against per-class size for every
/// (model, dataset) pair with at least two sizes.
pub fn power_fits(results: &[ExperimentResult]) -> Vec<(String, String, Result<PowerCurveFit>)> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in results {
        let key = (r.model_name.clone(), r.dataset_name.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(m, d)| {
            let pts: Vec<(f64, f64)> = results
                .iter()
                .filter(|r| r.model_name == m && r.dataset_name == d)
                .map(|r| (r.per_class_samples as f64, r.mean_accuracy))
                .collect();
            let fit = fit_power_curve(&pts);
            (m, d, fit)
        })
        .collect()
}

/// Raw counts with class names as header and first column.
pub fn write_confusion_csv(path: &Path, cm: &ConfusionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(cm.class_names.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in cm.counts.rows().into_iter().enumerate() {
        let mut rec = vec![cm.class_names[i].clone()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Row-normalised rates with two decimals.
pub fn confusion_markdown(cm: &ConfusionMatrix) -> String {
    let rates = cm.row_normalized();
    let mut out = String::from("| true \\ predicted |");
    for n in &cm.class_names {
        let _ = write!(out, " {n} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(cm.class_names.len()));
    out.push('\n');
    for (i, row) in rates.rows().into_iter().enumerate() {
        let _ = write!(out, "| {} |", cm.class_names[i]);
        for v in row {
            let _ = write!(out, " {v:.2} |");
        }
        out.push('\n');
    }
    out
}

/// Heatmap of row-normalised rates, `cell` pixels per entry, shading from
/// white (0) to dark blue (1).
pub fn write_confusion_png(path: &Path, cm: &ConfusionMatrix, cell: u32) -> Result<()> {
    let rates = cm.row_normalized();
    let k = cm.n_classes() as u32;
    let cell = cell.max(1);
    let img = RgbImage::from_fn(k * cell, k * cell, |x, y| {
        let v = rates[[(y / cell) as usize, (x / cell) as usize]];
        let lerp = |hi: f64, lo: f64| (hi + (lo - hi) * v).round() as u8;
        Rgb([lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0)])
    });
    img.save(path)?;
    Ok(())
}
