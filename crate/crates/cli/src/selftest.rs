//! Oracle suites run by `instrclass selftest`. Each compares a library
//! routine against an independent direct computation.

use std::f64::consts::PI;

use anyhow::{ensure, Result};
use instrclass::classical::{train_gaussian_nb, Classifier, LabeledMatrix};
use instrclass::dsp::fft::fft_real;
use instrclass::evaluation::fit_power_curve;
use instrclass::neural::{
    cross_entropy, Activation, BranchSpec, LayerSpec, Mode, Network, NetworkSpec,
};
use instrclass::rng;
use ndarray::{Array2, ArrayD, IxDyn};
use rand::Rng;

pub struct SuiteResult {
    pub name: &'static str,
    pub outcome: Result<String>,
}

pub fn run_all() -> Vec<SuiteResult> {
    let suites: [(&'static str, fn() -> Result<String>); 4] =
        [("dft", dft_suite), ("gradient_check", gradient_suite), ("nb_oracle", nb_suite), ("power_fit", power_suite)];
    suites.into_iter().map(|(name, f)| SuiteResult { name, outcome: f() }).collect()
}

/// Half spectrum by the O(n^2) definition, twiddles indexed by `k*t mod n`.
fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    let twiddle: Vec<(f64, f64)> = (0..n).map(|i| {
        let a = -2.0 * PI * i as f64 / n as f64;
        (a.cos(), a.sin())
    }).collect();
    (0..=n / 2)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let (c, s) = twiddle[(k * t) % n];
                (re + v * c, im + v * s)
            })
        })
        .collect()
}

fn dft_suite() -> Result<String> {
    const N: usize = 2048;
    let mut rng = rng::stream(2024, 0);
    let mut worst: f64 = 0.0;
    let mut parseval: f64 = 0.0;
    for _ in 0..10 {
        let x: Vec<f64> = (0..N).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = fft_real(&x)?;
        let slow = naive_dft(&x);
        let scale = slow.iter().map(|(r, i)| r.hypot(*i)).fold(0.0, f64::max);
        for (f, (r, i)) in fast.iter().zip(&slow) {
            worst = worst.max((f.re - r).hypot(f.im - i) / scale);
        }
        // Full-spectrum energy from the half spectrum: interior bins twice.
        let half: f64 = fast.iter().enumerate().map(|(k, c)| {
            let w = if k == 0 || k == N / 2 { 1.0 } else { 2.0 };
            w * c.norm_sqr()
        }).sum();
        let time: f64 = x.iter().map(|v| v * v).sum();
        parseval = parseval.max((half / N as f64 - time).abs() / time);
    }
    ensure!(worst < 1e-9, "fft vs dft relative error {worst:e}");
    ensure!(parseval < 1e-9, "parseval relative error {parseval:e}");
    Ok(format!("max relative error {worst:.2e}, parseval {parseval:.2e}"))
}

fn randn(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut r = rng::stream(seed, 3);
    ArrayD::from_shape_fn(IxDyn(shape), |_| r.random_range(-1.0..1.0))
}

fn loss(net: &Network, x: &[ArrayD<f64>], y: &[usize]) -> Result<f64> {
    let (p, _) = net.forward(x, Mode::Train, &mut rng::stream(1, 2))?;
    Ok(cross_entropy(&p, y).0 + net.penalty())
}

/// Backprop against central differences on a net with every parametric
/// layer kind.
fn gradient_suite() -> Result<String> {
    let act = |a| LayerSpec::Activation { activation: a };
    let spec = NetworkSpec {
        branches: vec![BranchSpec {
            input_shape: vec![2, 6, 6],
            layers: vec![
                LayerSpec::Conv2d { filters: 3, kernel: 3, l1: 1e-3, l2: 1e-3 },
                LayerSpec::BatchNorm,
                act(Activation::Elu),
                LayerSpec::MaxPool2d { pool: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 5, l1: 1e-3, l2: 1e-2 },
                act(Activation::Relu),
                LayerSpec::Dense { units: 3, l1: 0.0, l2: 0.0 },
                act(Activation::Softmax),
            ],
        }],
        head: vec![],
    };
    let net = Network::build(&spec, 11)?;
    let x = vec![randn(&[5, 2, 6, 6], 4)];
    let y = vec![0, 1, 2, 1, 0];
    let (p, cache) = net.forward(&x, Mode::Train, &mut rng::stream(1, 2))?;
    let analytic = net.backward(&cache, cross_entropy(&p, &y).1, true);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (pi, a) in analytic.iter().enumerate() {
        for (e, &an) in a.iter().enumerate() {
            let bump = |delta: f64| -> Result<f64> {
                let mut n = net.clone();
                *n.params_mut()[pi].iter_mut().nth(e).expect("index in range") += delta;
                loss(&n, &x, &y)
            };
            let numeric = (bump(h)? - bump(-h)?) / (2.0 * h);
            worst = worst.max((an - numeric).abs() / an.abs().max(numeric.abs()).max(1e-6));
        }
    }
    ensure!(worst < 1e-4, "worst relative gradient error {worst:e}");
    Ok(format!("{} parameters, worst relative error {worst:.2e}", net.n_params()))
}

/// Posterior from the Gaussian density and class frequencies, computed in
/// linear space straight from the training rows.
fn nb_suite() -> Result<String> {
    let mut rng = rng::stream(77, 0);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let (n, d, k) = (12, 3, 3);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        let model = train_gaussian_nb(&LabeledMatrix::new(x.clone(), y.clone(), k)?)?;
        let q = Array2::from_shape_fn((4, d), |_| rng.random_range(-1.0..1.0));
        let proba = model.predict_proba(q.view())?;
        for (qi, row) in q.rows().into_iter().enumerate() {
            let joint: Vec<f64> = (0..k)
                .map(|c| {
                    let members: Vec<usize> = (0..n).filter(|&i| y[i] == c).collect();
                    let m = members.len() as f64;
                    let mut p = m / n as f64;
                    for j in 0..d {
                        let mean = members.iter().map(|&i| x[[i, j]]).sum::<f64>() / m;
                        let var = members.iter().map(|&i| (x[[i, j]] - mean).powi(2)).sum::<f64>() / m;
                        p *= (-(row[j] - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
                    }
                    p
                })
                .collect();
            let total: f64 = joint.iter().sum();
            for c in 0..k {
                worst = worst.max((proba[[qi, c]] - joint[c] / total).abs());
            }
        }
        ensure!(worst < 1e-9, "trial {trial}: posterior error {worst:e}");
    }
    Ok(format!("20 instances, max posterior error {worst:.2e}"))
}

fn power_suite() -> Result<String> {
    let pts: Vec<(f64, f64)> = [50.0f64, 100.0, 200.0, 400.0].iter().map(|&x| (x, 2.0 * x.sqrt())).collect();
    let f = fit_power_curve(&pts)?;
    ensure!((f.a - 2.0).abs() < 1e-9 && (f.b - 0.5).abs() < 1e-9, "recovered a={}, b={}", f.a, f.b);
    Ok(format!("a={:.12}, b={:.12}", f.a, f.b))
}
