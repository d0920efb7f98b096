use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{softmax_rows, Classifier, LabeledMatrix};
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes. Classes absent from the training data keep a zero
/// prior and are never predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: Vec<f64>,
    /// `[class, feature]`
    pub mean: Array2<f64>,
    /// `[class, feature]`, floored at [`VARIANCE_FLOOR`].
    pub var: Array2<f64>,
}

/// Fits per-class priors, means and variances. Every class that appears
/// must appear at least twice.
pub fn train_gaussian_nb(data: &LabeledMatrix) -> Result<GaussianNb> {
    let (n, d) = data.x.dim();
    let counts = data.class_counts();
    if let Some((class, &c)) = counts.iter().enumerate().find(|(_, &c)| c == 1) {
        return Err(Error::Training(format!("class {class} has {c} sample; naive Bayes needs at least 2")));
    }
    let k = data.n_classes;
    let mut mean = Array2::zeros((k, d));
    let mut var = Array2::from_elem((k, d), VARIANCE_FLOOR);
    for class in 0..k {
        if counts[class] == 0 {
            continue;
        }
        let rows: Vec<usize> = (0..n).filter(|&i| data.y[i] == class).collect();
        let xs = data.x.select(Axis(0), &rows);
        let mu = xs.mean_axis(Axis(0)).expect("non-empty class");
        let v = xs.var_axis(Axis(0), 0.0).mapv(|v| v.max(VARIANCE_FLOOR));
        mean.row_mut(class).assign(&mu);
        var.row_mut(class).assign(&v);
    }
    let log_prior = counts
        .iter()
        .map(|&c| if c == 0 { f64::NEG_INFINITY } else { (c as f64 / n as f64).ln() })
        .collect();
    Ok(GaussianNb { log_prior, mean, var })
}

impl GaussianNb {
    /// Unnormalised log posterior of every class for one sample.
    pub fn joint_log_likelihood(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        Array1::from_shape_fn(self.log_prior.len(), |c| {
            if self.log_prior[c] == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let ll: f64 = x
                .iter()
                .zip(self.mean.row(c))
                .zip(self.var.row(c))
                .map(|((&xi, &m), &v)| -0.5 * (ln_2pi + v.ln() + (xi - m).powi(2) / v))
                .sum();
            self.log_prior[c] + ll
        })
    }
}

impl Classifier for GaussianNb {
    fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    fn n_features(&self) -> usize {
        self.mean.ncols()
    }

    fn proba_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut jll = Array2::zeros((x.nrows(), self.n_classes()));
        for (i, row) in x.rows().into_iter().enumerate() {
            jll.row_mut(i).assign(&self.joint_log_likelihood(row));
        }
        softmax_rows(jll)
    }
}
