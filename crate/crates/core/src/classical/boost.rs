//! SAMME AdaBoost over weighted stumps, and softmax gradient boosting
//! with an optional L2-regularised, DART-dropout variant.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_weighted, DecisionTree, RegressionTargets, RegressionTree, TreeConfig};
use super::{argmax, normalize_votes, softmax_rows, Classifier, LabeledMatrix};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostVariant {
    AdaboostSamme,
    Gradient,
    XgbRegularized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    /// Regression tree depth; AdaBoost always uses stumps.
    pub max_depth: usize,
    pub variant: BoostVariant,
    /// Added to every leaf denominator (`xgb_regularized` only).
    pub l2_lambda: f64,
    /// Per-round dropout probability of earlier rounds (`xgb_regularized` only).
    pub drop_rate: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self::gradient(100)
    }
}

impl BoostConfig {
    pub fn adaboost(n_estimators: usize) -> Self {
        Self {
            n_estimators,
            learning_rate: 1.0,
            max_depth: 1,
            variant: BoostVariant::AdaboostSamme,
            l2_lambda: 0.0,
            drop_rate: 0.0,
            seed: 0,
        }
    }

    pub fn gradient(n_estimators: usize) -> Self {
        Self {
            n_estimators,
            learning_rate: 0.1,
            max_depth: 3,
            variant: BoostVariant::Gradient,
            l2_lambda: 0.0,
            drop_rate: 0.0,
            seed: 0,
        }
    }

    pub fn xgb(n_estimators: usize) -> Self {
        Self {
            variant: BoostVariant::XgbRegularized,
            l2_lambda: 1.0,
            drop_rate: 0.1,
            ..Self::gradient(n_estimators)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning_rate {} must be finite and non-negative", self.learning_rate)));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("l2_lambda {} must be non-negative", self.l2_lambda)));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::InvalidConfig(format!("drop_rate {} outside [0, 1)", self.drop_rate)));
        }
        Ok(())
    }
}

/// SAMME estimator weight `lr * (ln((1-err)/err) + ln(K-1))`.
pub fn samme_alpha(err: f64, n_classes: usize, learning_rate: f64) -> f64 {
    learning_rate * (((1.0 - err) / err).ln() + ((n_classes as f64) - 1.0).ln())
}

/// Weighted-error floor used for the weight of a perfect stump.
const PERFECT_ERR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub estimators: Vec<(DecisionTree, f64)>,
    /// Class predicted when no estimator was accepted.
    pub fallback_class: usize,
    /// Weighted training error of every fitted stump, including the one
    /// that triggered an early stop.
    pub errors: Vec<f64>,
    pub n_features: usize,
    pub n_classes: usize,
}

pub fn train_adaboost(data: &LabeledMatrix, cfg: &BoostConfig) -> Result<AdaBoost> {
    if cfg.variant != BoostVariant::AdaboostSamme {
        return Err(Error::InvalidConfig("train_adaboost needs the adaboost_samme variant".into()));
    }
    cfg.validate()?;
    let n = data.n_samples();
    let k = data.n_classes;
    let counts = data.class_counts();
    let fallback_class = argmax(counts.iter().map(|&c| c as f64));
    let stump = TreeConfig { max_depth: Some(1), ..Default::default() };
    let mut rng = rng::stream(cfg.seed, 0);
    let mut w = vec![1.0 / n as f64; n];
    let mut estimators = Vec::new();
    let mut errors = Vec::new();
    for _ in 0..cfg.n_estimators {
        let tree = fit_weighted(data.x.view(), &data.y, k, &w, &stump, &mut rng);
        let wrong: Vec<bool> = data.x.rows().into_iter().zip(&data.y).map(|(r, &y)| tree.predict_row(r) != y).collect();
        let err: f64 = w.iter().zip(&wrong).filter(|(_, &m)| m).map(|(wi, _)| wi).sum();
        errors.push(err);
        if err <= 0.0 {
            estimators.push((tree, samme_alpha(PERFECT_ERR, k, cfg.learning_rate)));
            break;
        }
        if err >= 1.0 - 1.0 / k as f64 {
            break;
        }
        let alpha = samme_alpha(err, k, cfg.learning_rate);
        for (wi, &m) in w.iter_mut().zip(&wrong) {
            if m {
                *wi *= alpha.exp();
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= total);
        estimators.push((tree, alpha));
    }
    Ok(AdaBoost { estimators, fallback_class, errors, n_features: data.n_features(), n_classes: k })
}

impl Classifier for AdaBoost {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Normalised `Σ alpha` per class.
    fn proba_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut votes = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.rows().into_iter().enumerate() {
            if self.estimators.is_empty() {
                votes[[i, self.fallback_class]] = 1.0;
            }
            for (tree, alpha) in &self.estimators {
                votes[[i, tree.predict_row(row)]] += alpha;
            }
        }
        normalize_votes(votes)
    }
}

/// One boosting round: a regression tree per class and the round weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub trees: Vec<RegressionTree>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    /// Log class priors.
    pub init: Vec<f64>,
    pub rounds: Vec<BoostRound>,
    pub n_features: usize,
}

/// Prior floor for classes absent from the training data.
const PRIOR_FLOOR: f64 = 1e-12;

/// Softmax gradient boosting. Scores start at the log class priors; each
/// round fits one regression tree per class to `onehot - softmax(scores)`
/// with Newton leaves `Σr / (Σp(1-p) + λ)`.
///
/// `gradient` chooses splits by squared-error reduction and ignores `λ`
/// and dropout. `xgb_regularized` chooses splits by the regularised
/// second-order gain and drops each earlier round with probability
/// `drop_rate`: with `k` rounds dropped, they are rescaled by
/// `k / (k + lr)` and the new round gets weight `lr / (k + lr)`.
pub fn train_gradient_boosting(data: &LabeledMatrix, cfg: &BoostConfig) -> Result<GradientBoosting> {
    if cfg.variant == BoostVariant::AdaboostSamme {
        return Err(Error::InvalidConfig("train_gradient_boosting needs the gradient or xgb_regularized variant".into()));
    }
    cfg.validate()?;
    let xgb = cfg.variant == BoostVariant::XgbRegularized;
    let (n, k) = (data.n_samples(), data.n_classes);
    let init: Vec<f64> = data.class_counts().iter().map(|&c| (c as f64 / n as f64).max(PRIOR_FLOOR).ln()).collect();
    let lambda = if xgb { cfg.l2_lambda } else { 0.0 };
    let mut drop_rng = rng::stream(cfg.seed, 0);
    let mut rounds: Vec<BoostRound> = Vec::with_capacity(cfg.n_estimators);
    // Raw per-round tree outputs on the training set, `[sample, class]`.
    let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(cfg.n_estimators);
    let ones = vec![1.0; n];
    let (mut grad, mut hess) = (vec![vec![0.0; n]; k], vec![vec![0.0; n]; k]);

    for _ in 0..cfg.n_estimators {
        let dropped: Vec<usize> = if xgb && cfg.drop_rate > 0.0 {
            (0..rounds.len()).filter(|_| drop_rng.random_bool(cfg.drop_rate)).collect()
        } else {
            Vec::new()
        };
        let mut scores = Array2::from_shape_fn((n, k), |(_, c)| init[c]);
        for (r, out) in outputs.iter().enumerate() {
            if dropped.binary_search(&r).is_err() {
                scores.scaled_add(rounds[r].weight, out);
            }
        }
        let p = softmax_rows(scores);
        for c in 0..k {
            for i in 0..n {
                let pic = p[[i, c]];
                grad[c][i] = f64::from(u8::from(data.y[i] == c)) - pic;
                hess[c][i] = pic * (1.0 - pic);
            }
        }
        let mut out = Array2::zeros((n, k));
        let mut trees = Vec::with_capacity(k);
        for c in 0..k {
            let targets = RegressionTargets {
                grad: &grad[c],
                split_hess: if xgb { &hess[c] } else { &ones },
                leaf_hess: &hess[c],
                lambda,
            };
            let tree = RegressionTree::fit(data.x.view(), &targets, cfg.max_depth);
            for (i, row) in data.x.rows().into_iter().enumerate() {
                out[[i, c]] = tree.predict_row(row);
            }
            trees.push(tree);
        }
        let kd = dropped.len() as f64;
        let weight = if dropped.is_empty() {
            cfg.learning_rate
        } else {
            let scale = kd / (kd + cfg.learning_rate);
            for &r in &dropped {
                rounds[r].weight *= scale;
            }
            cfg.learning_rate / (kd + cfg.learning_rate)
        };
        rounds.push(BoostRound { trees, weight });
        outputs.push(out);
    }
    Ok(GradientBoosting { init, rounds, n_features: data.n_features() })
}

impl GradientBoosting {
    /// Raw class scores `[sample, class]`.
    pub fn scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let k = self.init.len();
        let mut s = Array2::from_shape_fn((x.nrows(), k), |(_, c)| self.init[c]);
        for (i, row) in x.rows().into_iter().enumerate() {
            for round in &self.rounds {
                for (c, tree) in round.trees.iter().enumerate() {
                    s[[i, c]] += round.weight * tree.predict_row(row);
                }
            }
        }
        s
    }
}

impl Classifier for GradientBoosting {
    fn n_classes(&self) -> usize {
        self.init.len()
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn proba_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        softmax_rows(self.scores(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::testdata::{accuracy, blobs, random_matrix};
    use crate::oracle;
    use ndarray::array;

    #[test]
    fn k2_alpha_is_classic() {
        for err in [0.1f64, 0.3, 0.45] {
            let classic = ((1.0 - err) / err as f64).ln();
            assert!((samme_alpha(err, 2, 1.0) - classic).abs() < 1e-15);
        }
        assert!((samme_alpha(0.5, 3, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn stump_separable_stops_after_one_round() {
        let data = LabeledMatrix::new(array![[0.0], [1.0], [2.0], [3.0]], vec![0, 0, 1, 1], 2).unwrap();
        let m = train_adaboost(&data, &BoostConfig::adaboost(50)).unwrap();
        assert_eq!(m.estimators.len(), 1);
        assert_eq!(m.errors, vec![0.0]);
        assert_eq!(m.predict(data.x.view()).unwrap(), data.y);
    }

    #[test]
    fn four_point_xor_has_no_useful_stump() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = vec![0, 0, 1, 1];
        let best = oracle::best_stump_error(&x, &y, 2, &[0.25; 4]);
        assert_eq!(best, 0.5);
        let data = LabeledMatrix::new(x, y, 2).unwrap();
        let m = train_adaboost(&data, &BoostConfig::adaboost(50)).unwrap();
        // err = 0.5 = 1 - 1/K stops before any estimator is accepted.
        assert!(m.estimators.is_empty());
        assert_eq!(m.errors, vec![0.5]);
        assert_eq!(accuracy(&m.predict(data.x.view()).unwrap(), &data.y), 0.5);
    }

    #[test]
    fn stumps_combine_on_an_interval() {
        // Class 1 occupies the middle; no single threshold separates it.
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = vec![0, 0, 1, 1, 0, 0];
        let best = oracle::best_stump_error(&x, &y, 2, &[1.0 / 6.0; 6]);
        assert!((best - 1.0 / 3.0).abs() < 1e-12);
        let data = LabeledMatrix::new(x, y, 2).unwrap();
        let m = train_adaboost(&data, &BoostConfig::adaboost(50)).unwrap();
        assert!(m.estimators.len() > 1);
        assert_eq!(accuracy(&m.predict(data.x.view()).unwrap(), &data.y), 1.0);
    }

    #[test]
    fn first_stump_error_bounded_by_exhaustive_minimum() {
        for seed in 0..20 {
            let data = random_matrix(15, 2, 3, seed);
            let m = train_adaboost(&data, &BoostConfig::adaboost(1)).unwrap();
            let w = vec![1.0 / 15.0; 15];
            let best = oracle::best_stump_error(&data.x, &data.y, 3, &w);
            // The gini stump never beats the error-minimising stump.
            assert!(m.errors[0] >= best - 1e-12, "seed {seed}: {} vs {best}", m.errors[0]);
        }
    }

    #[test]
    fn adaboost_on_blobs() {
        let (train, test) = (blobs(100, 1), blobs(100, 2));
        let m = train_adaboost(&train, &BoostConfig::adaboost(50)).unwrap();
        assert!(accuracy(&m.predict(test.x.view()).unwrap(), &test.y) >= 0.9);
    }

    #[test]
    fn zero_learning_rate_predicts_prior() {
        let mut data = blobs(20, 3);
        data.y[0] = 2; // class 2 is now the most frequent
        let cfg = BoostConfig { learning_rate: 0.0, ..BoostConfig::gradient(10) };
        let m = train_gradient_boosting(&data, &cfg).unwrap();
        assert!(m.predict(data.x.view()).unwrap().iter().all(|&l| l == 2));
    }

    #[test]
    fn huge_lambda_predicts_prior() {
        let mut data = blobs(20, 3);
        data.y[0] = 1;
        let cfg = BoostConfig { l2_lambda: 1e12, drop_rate: 0.0, ..BoostConfig::xgb(10) };
        let m = train_gradient_boosting(&data, &cfg).unwrap();
        assert!(m.predict(data.x.view()).unwrap().iter().all(|&l| l == 1));
    }

    #[test]
    fn gradient_blobs_accuracy() {
        let (train, test) = (blobs(100, 1), blobs(300, 2));
        let cfg = BoostConfig { max_depth: 3, ..BoostConfig::gradient(50) };
        let m = train_gradient_boosting(&train, &cfg).unwrap();
        assert!(accuracy(&m.predict(test.x.view()).unwrap(), &test.y) >= 0.95);
    }

    #[test]
    fn xgb_with_dropout_is_deterministic_and_accurate() {
        let (train, test) = (blobs(100, 4), blobs(300, 5));
        let cfg = BoostConfig { drop_rate: 0.2, seed: 3, ..BoostConfig::xgb(50) };
        let a = train_gradient_boosting(&train, &cfg).unwrap();
        assert_eq!(a, train_gradient_boosting(&train, &cfg).unwrap());
        assert!(a.rounds.iter().any(|r| r.weight < cfg.learning_rate));
        assert!(accuracy(&a.predict(test.x.view()).unwrap(), &test.y) >= 0.95);
    }

    #[test]
    fn boosting_reduces_training_loss() {
        let data = random_matrix(60, 3, 3, 6);
        let loss = |m: &GradientBoosting| {
            let p = m.predict_proba(data.x.view()).unwrap();
            -data.y.iter().enumerate().map(|(i, &c)| p[[i, c]].ln()).sum::<f64>() / 60.0
        };
        let mut prev = f64::INFINITY;
        for rounds in [0, 5, 20, 40] {
            let l = loss(&train_gradient_boosting(&data, &BoostConfig::gradient(rounds)).unwrap());
            assert!(l < prev, "{rounds} rounds: {l} >= {prev}");
            prev = l;
        }
    }

    #[test]
    fn variant_mismatch_rejected() {
        let data = blobs(5, 1);
        assert!(train_adaboost(&data, &BoostConfig::gradient(3)).is_err());
        assert!(train_gradient_boosting(&data, &BoostConfig::adaboost(3)).is_err());
        assert!(train_gradient_boosting(&data, &BoostConfig { drop_rate: 1.0, ..BoostConfig::xgb(3) }).is_err());
    }
}
