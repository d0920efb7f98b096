//! Slow, direct reference computations for integration tests. Nothing here
//! calls into the library's numeric code.
#![allow(dead_code)]

use std::f64::consts::PI;

use instrclass::classical::LabeledMatrix;
use instrclass::rng;
use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

/// Bins `0..=N/2` of `Σ_t x[t] e^{-2πikt/N}` in O(N²). Twiddles come from
/// one table indexed by `k·t mod N`, so the phase never grows large.
pub fn naive_dft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let table: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 / n as f64)).collect();
    (0..=n / 2)
        .map(|k| x.iter().enumerate().map(|(t, &v)| table[(k * t) % n] * v).sum())
        .collect()
}

/// Gaussian naive Bayes posterior straight from the density formula, in
/// linear space. Variances are population variances raised to `floor`.
pub fn nb_posterior(x: &Array2<f64>, y: &[usize], k: usize, probe: &Array2<f64>, floor: f64) -> Array2<f64> {
    let mut out = Array2::zeros((probe.nrows(), k));
    for (s, row) in probe.rows().into_iter().enumerate() {
        let joint: Vec<f64> = (0..k)
            .map(|c| {
                let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
                let m = members.len() as f64;
                let mut p = m / y.len() as f64;
                for f in 0..x.ncols() {
                    let mu = members.iter().map(|&i| x[[i, f]]).sum::<f64>() / m;
                    let var = (members.iter().map(|&i| (x[[i, f]] - mu).powi(2)).sum::<f64>() / m).max(floor);
                    p *= (-(row[f] - mu).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
                }
                p
            })
            .collect();
        let total: f64 = joint.iter().sum();
        for c in 0..k {
            out[[s, c]] = joint[c] / total;
        }
    }
    out
}

pub fn gini(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    1.0 - counts.iter().map(|c| (c / n).powi(2)).sum::<f64>()
}

pub fn entropy(counts: &[f64]) -> f64 {
    let n: f64 = counts.iter().sum();
    -counts.iter().filter(|&&c| c > 0.0).map(|c| (c / n) * (c / n).log2()).sum::<f64>()
}

/// Best `(feature, threshold, gain)` over every feature and every midpoint
/// of adjacent distinct values, impurities recomputed from scratch. The
/// first candidate in (feature, threshold) order wins within `tol`.
pub fn best_split(x: &Array2<f64>, y: &[usize], k: usize, impurity: fn(&[f64]) -> f64, tol: f64) -> Option<(usize, f64, f64)> {
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
        let mut values = x.column(f).to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (left, right): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[[i, f]] <= t);
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

/// Valid, stride-1 cross-correlation. `x: [n,c,h,w]`, `w: [f,c,k,k]`.
pub fn conv2d(x: &ArrayD<f64>, w: &ArrayD<f64>, b: &ArrayD<f64>) -> ArrayD<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (f, k) = (w.shape()[0], w.shape()[2]);
    let mut out = ArrayD::zeros(IxDyn(&[n, f, h - k + 1, wd - k + 1]));
    for ni in 0..n {
        for fi in 0..f {
            for i in 0..h - k + 1 {
                for j in 0..wd - k + 1 {
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

pub fn rbf(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>, gamma: f64) -> f64 {
    (-gamma * a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>()).exp()
}

/// Assigns each probe row to the closest class mean. With equal priors and
/// equal isotropic covariances this is the Bayes classifier.
pub fn nearest_mean(x: &Array2<f64>, y: &[usize], k: usize, probe: &Array2<f64>) -> Vec<usize> {
    let means: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
            (0..x.ncols()).map(|f| rows.iter().map(|&i| x[[i, f]]).sum::<f64>() / rows.len() as f64).collect()
        })
        .collect();
    probe
        .rows()
        .into_iter()
        .map(|row| {
            let d = |m: &Vec<f64>| row.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            (0..k).min_by(|&a, &b| d(&means[a]).total_cmp(&d(&means[b]))).expect("k > 0")
        })
        .collect()
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Three unit-variance Gaussian blobs centred at (0,0), (5,5) and (-5,5).
pub fn blobs(per_class: usize, seed: u64) -> LabeledMatrix {
    let centres = [(0.0, 0.0), (5.0, 5.0), (-5.0, 5.0)];
    let mut r = rng::stream(seed, 0);
    let mut x = Array2::zeros((3 * per_class, 2));
    let mut y = Vec::with_capacity(3 * per_class);
    for (c, &(cx, cy)) in centres.iter().enumerate() {
        for i in 0..per_class {
            let nx: f64 = StandardNormal.sample(&mut r);
            let ny: f64 = StandardNormal.sample(&mut r);
            x[[c * per_class + i, 0]] = cx + nx;
            x[[c * per_class + i, 1]] = cy + ny;
            y.push(c);
        }
    }
    LabeledMatrix::new(x, y, 3).expect("valid blobs")
}

/// `labels` in a seeded random order; class counts are unchanged.
pub fn shuffled(labels: &[usize], seed: u64) -> Vec<usize> {
    let mut out = labels.to_vec();
    out.shuffle(&mut rng::stream(seed, 9));
    out
}
