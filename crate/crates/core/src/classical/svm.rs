//! RBF support vector machine, one-vs-rest, trained with simplified SMO.
//!
//! Inputs are standardised per feature with the training mean and
//! population standard deviation; the transform is part of the model.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax_rows, Classifier, LabeledMatrix};
use crate::error::{Error, Result};
use crate::rng::{self, DetRng};

/// Training sets up to this size cache the full kernel matrix.
const FULL_KERNEL_MAX: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    /// `1 / (d * Var(X))` over the standardised training matrix.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub gamma: Gamma,
    /// KKT tolerance.
    pub tolerance: f64,
    /// Consecutive change-free sweeps that count as converged.
    pub max_passes: usize,
    /// Sweep cap per binary machine.
    pub max_iter: usize,
    /// Drives second-index selection.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 10.0, gamma: Gamma::Auto, tolerance: 1e-3, max_passes: 5, max_iter: 10_000, seed: 0 }
    }
}

/// One class-versus-rest machine: `f(z) = Σ coef_s k(sv_s, z) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support_vectors: Array2<f64>,
    /// `alpha_s * y_s` for each support vector.
    pub coef: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
    pub gamma: f64,
    pub machines: Vec<BinarySvm>,
}

pub(crate) struct Kernel<'a> {
    x: ArrayView2<'a, f64>,
    gamma: f64,
    full: Option<Array2<f64>>,
}

fn rbf(a: ArrayView1<f64>, b: ArrayView1<f64>, gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-gamma * d2).exp()
}

impl<'a> Kernel<'a> {
    pub(crate) fn new(x: ArrayView2<'a, f64>, gamma: f64) -> Self {
        let n = x.nrows();
        let full = (n <= FULL_KERNEL_MAX).then(|| {
            let mut k = Array2::zeros((n, n));
            for i in 0..n {
                k[[i, i]] = 1.0;
                for j in 0..i {
                    let v = rbf(x.row(i), x.row(j), gamma);
                    k[[i, j]] = v;
                    k[[j, i]] = v;
                }
            }
            k
        });
        Self { x, gamma, full }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        match &self.full {
            Some(k) => k[[i, j]],
            None => rbf(self.x.row(i), self.x.row(j), self.gamma),
        }
    }

    fn row_into(&self, i: usize, out: &mut [f64]) {
        match &self.full {
            Some(k) => out.copy_from_slice(k.row(i).as_slice().expect("standard layout")),
            None => {
                for (j, o) in out.iter_mut().enumerate() {
                    *o = rbf(self.x.row(i), self.x.row(j), self.gamma);
                }
            }
        }
    }
}

/// Dual solution of one binary problem with labels `±1`.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub b: f64,
    /// `f(x_i)` for every training point.
    pub f: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

pub(crate) fn smo(kernel: &Kernel, y: &[f64], cfg: &SvmConfig, rng: &mut DetRng) -> SmoSolution {
    let n = y.len();
    let c = cfg.c;
    let tol = cfg.tolerance;
    let min_step = 1e-5 * c.min(1.0);
    let mut alpha = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut b = 0.0;
    let (mut row_i, mut row_j) = (vec![0.0; n], vec![0.0; n]);

    // Attempts the joint step on (i, j); returns whether alphas moved.
    let mut take_step = |i: usize, j: usize, alpha: &mut [f64], f: &mut [f64], b: &mut f64| -> bool {
        if i == j {
            return false;
        }
        let (ei, ej) = (f[i] - y[i], f[j] - y[j]);
        let (ai, aj) = (alpha[i], alpha[j]);
        let (lo, hi) = if y[i] != y[j] {
            ((aj - ai).max(0.0), (c + aj - ai).min(c))
        } else {
            ((ai + aj - c).max(0.0), (ai + aj).min(c))
        };
        if hi - lo <= 0.0 {
            return false;
        }
        let (kii, kjj, kij) = (kernel.at(i, i), kernel.at(j, j), kernel.at(i, j));
        let eta = 2.0 * kij - kii - kjj;
        if eta >= 0.0 {
            return false;
        }
        let aj_new = (aj - y[j] * (ei - ej) / eta).clamp(lo, hi);
        if (aj_new - aj).abs() < min_step {
            return false;
        }
        let ai_new = (ai + y[i] * y[j] * (aj - aj_new)).clamp(0.0, c);
        let (di, dj) = (ai_new - ai, aj_new - aj);
        let b1 = *b - ei - y[i] * di * kii - y[j] * dj * kij;
        let b2 = *b - ej - y[i] * di * kij - y[j] * dj * kjj;
        let b_new = if ai_new > 0.0 && ai_new < c {
            b1
        } else if aj_new > 0.0 && aj_new < c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        kernel.row_into(i, &mut row_i);
        kernel.row_into(j, &mut row_j);
        let db = b_new - *b;
        for k in 0..n {
            f[k] += y[i] * di * row_i[k] + y[j] * dj * row_j[k] + db;
        }
        alpha[i] = ai_new;
        alpha[j] = aj_new;
        *b = b_new;
        true
    };

    let mut passes = 0;
    let mut sweeps = 0;
    while passes < cfg.max_passes {
        if sweeps >= cfg.max_iter {
            return SmoSolution { alpha, b, f, sweeps, converged: false };
        }
        sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            let r = y[i] * (f[i] - y[i]);
            let violates = (r < -tol && alpha[i] < c) || (r > tol && alpha[i] > 0.0);
            if !violates || n < 2 {
                continue;
            }
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            if take_step(i, j, &mut alpha, &mut f, &mut b) {
                changed += 1;
                continue;
            }
            // The random partner made no progress: scan the rest from a
            // random offset. A change-free sweep then means no pair can
            // move any violator by at least `min_step`.
            let start = rng.random_range(0..n);
            for step in 0..n {
                let j = (start + step) % n;
                if take_step(i, j, &mut alpha, &mut f, &mut b) {
                    changed += 1;
                    break;
                }
            }
        }
        passes = if changed == 0 { passes + 1 } else { 0 };
    }
    SmoSolution { alpha, b, f, sweeps, converged: true }
}

/// Solves one binary RBF problem (`y` in `{-1, +1}`) on `x` as given,
/// without standardisation. Exposed for checking optimality conditions.
pub fn solve_binary(x: ArrayView2<f64>, y: &[f64], gamma: f64, cfg: &SvmConfig) -> SmoSolution {
    smo(&Kernel::new(x, gamma), y, cfg, &mut rng::stream(cfg.seed, 0))
}

/// Largest KKT residual of a dual solution.
pub fn kkt_violation(sol: &SmoSolution, y: &[f64], c: f64) -> f64 {
    let bound_eps = 1e-12 * c.max(1.0);
    (0..y.len())
        .map(|i| {
            let m = y[i] * sol.f[i];
            if sol.alpha[i] <= bound_eps {
                (1.0 - m).max(0.0)
            } else if sol.alpha[i] >= c - bound_eps {
                (m - 1.0).max(0.0)
            } else {
                (m - 1.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

fn standardize(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (mean, scale)
}

/// One-vs-rest RBF SVM. If any machine exhausts `max_iter` the fully
/// assembled model is returned inside [`Error::SvmNotConverged`].
pub fn train_svm_rbf(data: &LabeledMatrix, cfg: &SvmConfig) -> Result<SvmModel> {
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::InvalidConfig(format!("c must be positive, got {}", cfg.c)));
    }
    if !(cfg.tolerance > 0.0) || cfg.max_passes == 0 {
        return Err(Error::InvalidConfig("tolerance must be positive and max_passes at least 1".into()));
    }
    let (mean, scale) = standardize(data.x.view());
    let xs = (&data.x - &mean) / &scale;
    let d = data.n_features() as f64;
    let gamma = match cfg.gamma {
        Gamma::Value(g) if g > 0.0 && g.is_finite() => g,
        Gamma::Value(g) => return Err(Error::InvalidConfig(format!("gamma must be positive, got {g}"))),
        Gamma::Auto => {
            let var = xs.var(0.0);
            if var > 1e-12 {
                1.0 / (d * var)
            } else {
                1.0 / d
            }
        }
    };
    let kernel = Kernel::new(xs.view(), gamma);
    let mut machines = Vec::with_capacity(data.n_classes);
    let mut worst_sweeps = None;
    for class in 0..data.n_classes {
        let y: Vec<f64> = data.y.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let sol = smo(&kernel, &y, cfg, &mut rng::stream(cfg.seed, class as u64));
        if !sol.converged {
            worst_sweeps = Some(sol.sweeps);
        }
        let support: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        machines.push(BinarySvm {
            support_vectors: xs.select(Axis(0), &support),
            coef: support.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
            b: sol.b,
        });
    }
    let model = SvmModel { mean, scale, gamma, machines };
    match worst_sweeps {
        Some(iterations) => Err(Error::SvmNotConverged { iterations, partial: Box::new(model) }),
        None => Ok(model),
    }
}

impl SvmModel {
    /// `[sample, class]` decision values.
    pub fn decision_function(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let xs = (&x - &self.mean) / &self.scale;
        let mut out = Array2::zeros((x.nrows(), self.machines.len()));
        for (s, row) in xs.rows().into_iter().enumerate() {
            for (c, m) in self.machines.iter().enumerate() {
                let sum: f64 = m
                    .support_vectors
                    .rows()
                    .into_iter()
                    .zip(&m.coef)
                    .map(|(sv, &w)| w * rbf(sv, row, self.gamma))
                    .sum();
                out[[s, c]] = sum + m.b;
            }
        }
        out
    }
}

impl Classifier for SvmModel {
    fn n_classes(&self) -> usize {
        self.machines.len()
    }

    fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Softmax of the decision values; the argmax is the largest margin.
    fn proba_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        softmax_rows(self.decision_function(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::testdata::{accuracy, blobs, random_matrix};
    use ndarray::array;

    fn two_blobs(per: usize, sep: f64, seed: u64) -> LabeledMatrix {
        let b = blobs(per, seed);
        let rows: Vec<usize> = (0..2 * per).collect();
        let mut d = b.select(&rows);
        d.x.column_mut(0).mapv_inplace(|v| v * sep / 5.0);
        d.n_classes = 2;
        d
    }

    /// Brute-force check that some direction separates the two classes.
    fn linearly_separable(d: &LabeledMatrix) -> bool {
        (0..3600).any(|step| {
            let th = step as f64 * std::f64::consts::PI / 1800.0;
            let proj: Vec<f64> = d.x.rows().into_iter().map(|r| r[0] * th.cos() + r[1] * th.sin()).collect();
            let max0 = (0..proj.len()).filter(|&i| d.y[i] == 0).map(|i| proj[i]).fold(f64::MIN, f64::max);
            let min1 = (0..proj.len()).filter(|&i| d.y[i] == 1).map(|i| proj[i]).fold(f64::MAX, f64::min);
            max0 < min1
        })
    }

    #[test]
    fn separable_blobs_fit_exactly() {
        let data = two_blobs(50, 5.0, 3);
        assert!(linearly_separable(&data));
        let m = train_svm_rbf(&data, &SvmConfig::default()).unwrap();
        assert_eq!(accuracy(&m.predict(data.x.view()).unwrap(), &data.y), 1.0);
    }

    #[test]
    fn kkt_holds_at_convergence() {
        for seed in 0..3 {
            let data = random_matrix(80, 3, 2, seed);
            let (mean, scale) = standardize(data.x.view());
            let xs = (&data.x - &mean) / &scale;
            let kernel = Kernel::new(xs.view(), 0.5);
            let y: Vec<f64> = data.y.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
            let cfg = SvmConfig { c: 1.0, ..Default::default() };
            let sol = smo(&kernel, &y, &cfg, &mut rng::stream(seed, 0));
            assert!(sol.converged);
            let v = kkt_violation(&sol, &y, cfg.c);
            assert!(v <= 2.0 * cfg.tolerance, "seed {seed}: violation {v}");
            let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
            assert!(balance.abs() < 1e-9);
            assert!(sol.alpha.iter().all(|&a| (0.0..=cfg.c).contains(&a)));
        }
    }

    #[test]
    fn error_cache_matches_direct_evaluation() {
        let data = random_matrix(40, 2, 2, 4);
        let xs = data.x.clone();
        let kernel = Kernel::new(xs.view(), 0.7);
        let y: Vec<f64> = data.y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let sol = smo(&kernel, &y, &SvmConfig::default(), &mut rng::stream(1, 0));
        for i in 0..40 {
            let direct: f64 = (0..40).map(|j| sol.alpha[j] * y[j] * rbf(xs.row(j), xs.row(i), 0.7)).sum::<f64>() + sol.b;
            assert!((direct - sol.f[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn tiny_c_underfits() {
        let mut data = two_blobs(60, 2.0, 8);
        // Label noise.
        for i in (0..data.y.len()).step_by(7) {
            data.y[i] = 1 - data.y[i];
        }
        let acc = |c: f64| {
            let m = train_svm_rbf(&data, &SvmConfig { c, ..Default::default() }).unwrap();
            accuracy(&m.predict(data.x.view()).unwrap(), &data.y)
        };
        assert!(acc(1e-6) <= acc(10.0));
    }

    #[test]
    fn duplicated_training_set_same_signs() {
        let data = two_blobs(30, 5.0, 12);
        let rows: Vec<usize> = (0..60).chain(0..60).collect();
        let doubled = data.select(&rows);
        let a = train_svm_rbf(&data, &SvmConfig::default()).unwrap();
        let b = train_svm_rbf(&doubled, &SvmConfig::default()).unwrap();
        let grid = Array2::from_shape_fn((400, 2), |(i, j)| if j == 0 { (i % 20) as f64 - 10.0 } else { (i / 20) as f64 - 5.0 });
        let (fa, fb) = (a.decision_function(grid.view()), b.decision_function(grid.view()));
        let agree = (0..400).filter(|&i| (fa[[i, 0]] > 0.0) == (fb[[i, 0]] > 0.0)).count();
        assert_eq!(agree, 400);
    }

    #[test]
    fn multiclass_blobs() {
        let (train, test) = (blobs(60, 5), blobs(100, 6));
        let m = train_svm_rbf(&train, &SvmConfig::default()).unwrap();
        assert!(accuracy(&m.predict(test.x.view()).unwrap(), &test.y) >= 0.95);
    }

    #[test]
    fn iteration_cap_returns_partial_model() {
        let data = random_matrix(60, 2, 2, 3);
        let cfg = SvmConfig { max_iter: 1, ..Default::default() };
        match train_svm_rbf(&data, &cfg) {
            Err(Error::SvmNotConverged { iterations, partial }) => {
                assert_eq!(iterations, 1);
                assert_eq!(partial.predict(data.x.view()).unwrap().len(), 60);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config() {
        let data = blobs(5, 1);
        assert!(train_svm_rbf(&data, &SvmConfig { c: 0.0, ..Default::default() }).is_err());
        assert!(train_svm_rbf(&data, &SvmConfig { gamma: Gamma::Value(-1.0), ..Default::default() }).is_err());
        let x = array![[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]];
        let constant = LabeledMatrix::new(x, vec![0, 1, 0], 2).unwrap();
        assert!(train_svm_rbf(&constant, &SvmConfig::default()).is_ok());
    }
}
