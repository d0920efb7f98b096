//! Brute-force reference implementations.
//!
//! Each function here is deliberately the slow, obvious computation and
//! shares no code with the optimised paths it is used to check.

use std::f64::consts::PI;

use num_complex::Complex64;

/// `X[k] = Σ_n x[n] e^{-2πikn/N}` for `k = 0..=N/2`, in O(N²).
pub fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (i, &v)| {
                // Reduce the phase index mod n to keep the angle small.
                let theta = -2.0 * PI * ((k * i) % n) as f64 / n as f64;
                acc + Complex64::new(v * theta.cos(), v * theta.sin())
            })
        })
        .collect()
}

/// Gaussian NB posterior computed directly from the density formula, one
/// sample and class at a time.
pub fn gaussian_nb_posterior(
    x: &ndarray::Array2<f64>,
    y: &[usize],
    k: usize,
    probe: &ndarray::Array2<f64>,
    var_floor: f64,
) -> ndarray::Array2<f64> {
    let d = x.ncols();
    let mut out = ndarray::Array2::zeros((probe.nrows(), k));
    for (s, row) in probe.rows().into_iter().enumerate() {
        let mut density = vec![0.0; k];
        for (c, dens) in density.iter_mut().enumerate() {
            let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
            let m = members.len() as f64;
            let mut p = m / y.len() as f64;
            for f in 0..d {
                let mu = members.iter().map(|&i| x[[i, f]]).sum::<f64>() / m;
                let var = (members.iter().map(|&i| (x[[i, f]] - mu).powi(2)).sum::<f64>() / m).max(var_floor);
                p *= (-(row[f] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            }
            *dens = p;
        }
        let total: f64 = density.iter().sum();
        for c in 0..k {
            out[[s, c]] = density[c] / total;
        }
    }
    out
}

/// Best split by exhaustive enumeration: every feature, every midpoint of
/// adjacent distinct values, impurity recomputed from scratch. Returns
/// `(feature, threshold, gain)`; the earliest candidate wins within `tol`.
pub fn best_split_exhaustive(
    x: &ndarray::Array2<f64>,
    y: &[usize],
    k: usize,
    impurity: fn(&[f64]) -> f64,
    tol: f64,
) -> Option<(usize, f64, f64)> {
    let n = y.len() as f64;
    let counts = |rows: &[usize]| {
        let mut c = vec![0.0; k];
        for &i in rows {
            c[y[i]] += 1.0;
        }
        c
    };
    let all: Vec<usize> = (0..y.len()).collect();
    let parent = impurity(&counts(&all));
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(f).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<usize> = all.iter().copied().filter(|&i| x[[i, f]] <= t).collect();
            let right: Vec<usize> = all.iter().copied().filter(|&i| x[[i, f]] > t).collect();
            let gain = parent
                - left.len() as f64 / n * impurity(&counts(&left))
                - right.len() as f64 / n * impurity(&counts(&right));
            if best.is_none_or(|(_, _, g)| gain > g + tol) {
                best = Some((f, t, gain));
            }
        }
    }
    best
}

pub fn gini(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    1.0 - counts.iter().map(|c| (c / n).powi(2)).sum::<f64>()
}

pub fn entropy(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    -counts.iter().filter(|&&c| c > 0.0).map(|c| (c / n) * (c / n).log2()).sum::<f64>()
}

/// Nearest class mean classifier: the Bayes rule for equal-variance
/// isotropic Gaussians with equal priors.
pub fn nearest_mean_predict(x: &ndarray::Array2<f64>, y: &[usize], k: usize, probe: &ndarray::Array2<f64>) -> Vec<usize> {
    let means: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
            (0..x.ncols())
                .map(|f| rows.iter().map(|&i| x[[i, f]]).sum::<f64>() / rows.len() as f64)
                .collect()
        })
        .collect();
    probe
        .rows()
        .into_iter()
        .map(|row| {
            let dist = |m: &Vec<f64>| row.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            (0..k).min_by(|&a, &b| dist(&means[a]).total_cmp(&dist(&means[b]))).unwrap()
        })
        .collect()
}

/// Best weighted decision stump error over every feature, every midpoint
/// and every assignment of classes to the two sides.
pub fn best_stump_error(x: &ndarray::Array2<f64>, y: &[usize], k: usize, w: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for f in 0..x.ncols() {
        let mut values: Vec<f64> = x.column(f).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut thresholds: Vec<f64> = values.windows(2).map(|p| (p[0] + p[1]) / 2.0).collect();
        thresholds.push(f64::INFINITY);
        for t in thresholds {
            for left_class in 0..k {
                for right_class in 0..k {
                    let err: f64 = (0..y.len())
                        .filter(|&i| {
                            let pred = if x[[i, f]] <= t { left_class } else { right_class };
                            pred != y[i]
                        })
                        .map(|i| w[i])
                        .sum();
                    best = best.min(err);
                }
            }
        }
    }
    best
}

/// Valid, stride-1 cross-correlation by direct summation.
/// `x: [n, c, h, w]`, `w: [f, c, k, k]`, `b: [f]`.
pub fn conv2d_naive(x: &ndarray::ArrayD<f64>, w: &ndarray::ArrayD<f64>, b: &ndarray::ArrayD<f64>) -> ndarray::ArrayD<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (f, k) = (w.shape()[0], w.shape()[2]);
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let mut out = ndarray::ArrayD::zeros(ndarray::IxDyn(&[n, f, oh, ow]));
    for ni in 0..n {
        for fi in 0..f {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b[[fi]];
                    for ci in 0..c {
                        for di in 0..k {
                            for dj in 0..k {
                                acc += x[[ni, ci, i + di, j + dj]] * w[[fi, ci, di, dj]];
                            }
                        }
                    }
                    out[[ni, fi, i, j]] = acc;
                }
            }
        }
    }
    out
}
