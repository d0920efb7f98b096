//! Confusion matrices, per-class metrics, accuracy-vs-size power fits and
//! repeated experiments with tabular reports.

pub mod experiment;
pub mod power;
pub mod report;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use experiment::{fit_model, run_experiment, ExperimentResult, ExperimentSplits, ModelSpec, TrainedModel};
pub use power::{fit_power_curve, PowerCurveFit};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Array2<u64>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn trace(&self) -> u64 {
        self.counts.diag().sum()
    }

    /// Each row divided by its sum; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Array2<f64> {
        let mut out = self.counts.mapv(|c| c as f64);
        for mut row in out.rows_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        out
    }
}

/// Class names `"0"`, `"1"`, ... for callers without labels.
pub fn default_class_names(k: usize) -> Vec<String> {
    (0..k).map(|i| i.to_string()).collect()
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!("{} true labels but {} predictions", y_true.len(), y_pred.len())));
    }
    let mut counts = Array2::zeros((k, k));
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::InvalidData(format!("label pair ({t}, {p}) outside 0..{k}")));
        }
        counts[[t, p]] += 1;
    }
    Ok(ConfusionMatrix { counts, class_names: default_class_names(k) })
}

/// `trace / total`; for two classes this is `(TP + TN) / N`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::InvalidData("accuracy of an empty confusion matrix".into())),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}

/// One-vs-rest metrics of one class. A ratio with a zero denominator is
/// reported as 0 and its name is listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f_measure: f64,
    /// Pooled one-vs-rest recall; equals `accuracy` for single-label data.
    pub micro_recall: f64,
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    let total = cm.total();
    let acc = accuracy(cm)?;
    let k = cm.n_classes();
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.counts[[c, c]];
        let p = cm.counts.row(c).sum();
        let predicted = cm.counts.column(c).sum();
        let (fp, fn_) = (predicted - tp, p - tp);
        let tn = total - tp - fp - fn_;
        let mut undefined: Vec<String> = Vec::new();
        let mut ratio = |num: u64, den: u64, name: &str| {
            if den == 0 {
                undefined.push(name.to_string());
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, "precision");
        let recall = ratio(tp, p, "recall");
        let fp_rate = ratio(fp, total - p, "fp_rate");
        let f_measure = if precision > 0.0 && recall > 0.0 {
            2.0 / (1.0 / precision + 1.0 / recall)
        } else {
            if undefined.iter().any(|u| u == "precision" || u == "recall") {
                undefined.push("f_measure".into());
            }
            0.0
        };
        per_class.push(ClassMetrics { tp, fp, fn_, tn, precision, recall, f_measure, tp_rate: recall, fp_rate, undefined });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
    let tp_sum: u64 = per_class.iter().map(|m| m.tp).sum();
    let p_sum: u64 = per_class.iter().map(|m| m.tp + m.fn_).sum();
    Ok(MetricReport {
        accuracy: acc,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f_measure: mean(|m| m.f_measure),
        micro_recall: tp_sum as f64 / p_sum as f64,
        per_class,
    })
}
