use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `accuracy ≈ a · size^b`, fitted by ordinary least squares on
/// `ln accuracy = ln a + b ln size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurveFit {
    pub a: f64,
    pub b: f64,
    /// Coefficient of determination of the log-log regression; 1 when the
    /// log accuracies are constant and fitted exactly.
    pub r_squared_log: f64,
    pub points: Vec<(f64, f64)>,
}

impl PowerCurveFit {
    pub fn predict(&self, size: f64) -> f64 {
        self.a * size.powf(self.b)
    }

    /// Observed points followed by `samples` fitted values on a log-spaced
    /// grid spanning the observed sizes.
    pub fn write_csv(&self, path: &Path, samples: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["kind", "size", "accuracy"])?;
        for &(x, y) in &self.points {
            w.write_record(["observed", &format!("{x}"), &format!("{y:.9}")])?;
        }
        let lo = self.points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        for i in 0..samples {
            let t = if samples == 1 { 0.0 } else { i as f64 / (samples - 1) as f64 };
            let x = (lo.ln() + t * (hi.ln() - lo.ln())).exp();
            w.write_record(["fitted", &format!("{x:.6}"), &format!("{:.9}", self.predict(x))])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn fit_power_curve(points: &[(f64, f64)]) -> Result<PowerCurveFit> {
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && x.is_finite() && *y > 0.0 && y.is_finite())) {
        return Err(Error::InvalidData(format!("power fit needs positive finite sizes and accuracies, got ({x}, {y})")));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    // Distinct sizes give a strictly positive spread.
    if points.len() < 2 || sxx <= 0.0 || points.iter().all(|p| p.0 == points[0].0) {
        return Err(Error::InvalidData("power fit needs at least 2 distinct sizes".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let ln_a = my - b * mx;
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - ln_a - b * x).powi(2)).sum();
    let r_squared_log = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(PowerCurveFit { a: ln_a.exp(), b, r_squared_log, points: points.to_vec() })
}
