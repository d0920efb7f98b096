//! Non-neural classifiers behind one train/predict interface.
//!
//! Every trainer is a pure function of its data, configuration and seed.
//! Ties are always broken toward the lowest index: lowest class id for
//! votes and argmaxes, lowest feature then lowest threshold for splits.

pub mod boost;
pub mod forest;
pub mod nb;
pub mod search;
pub mod svm;
pub mod tree;

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boost::{samme_alpha, train_adaboost, train_gradient_boosting, AdaBoost, BoostConfig, BoostVariant, GradientBoosting};
pub use forest::{train_random_forest, ForestConfig, MaxFeatures, RandomForest};
pub use nb::{train_gaussian_nb, GaussianNb};
pub use search::{random_search, CvRow, SearchSpace};
pub use svm::{kkt_violation, solve_binary, train_svm_rbf, Gamma, SmoSolution, SvmConfig, SvmModel};
pub use tree::{train_decision_tree, Criterion, DecisionTree, TreeConfig};

/// Training matrix `x[[sample, feature]]` with labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl LabeledMatrix {
    pub fn new(x: Array2<f64>, y: Vec<usize>, n_classes: usize) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidData("no training samples".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidData(format!("label {bad} not below class count {n_classes}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
        Ok(Self { x, y, n_classes })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.y {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, rows: &[usize]) -> LabeledMatrix {
        LabeledMatrix {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Shared prediction surface.
pub trait Classifier {
    fn n_classes(&self) -> usize;
    fn n_features(&self) -> usize;

    /// Row-stochastic scores; `x` has already been shape-checked.
    fn proba_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64>;

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() > 0 && x.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "model expects {} features, input has {}",
                self.n_features(),
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Ok(Array2::zeros((0, self.n_classes())));
        }
        Ok(self.proba_unchecked(x))
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let proba = self.predict_proba(x)?;
        Ok(proba.rows().into_iter().map(|r| argmax(r.iter().copied())).collect())
    }
}

/// Row-wise softmax of `scores`.
pub(crate) fn softmax_rows(mut scores: Array2<f64>) -> Array2<f64> {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    scores
}

/// Normalises non-negative vote rows; all-zero rows become uniform.
pub(crate) fn normalize_votes(mut votes: Array2<f64>) -> Array2<f64> {
    let k = votes.ncols() as f64;
    for mut row in votes.rows_mut() {
        let sum = row.sum();
        if sum > 0.0 {
            row /= sum;
        } else {
            row.fill(1.0 / k);
        }
    }
    votes
}

/// Any trained classical model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    NaiveBayes(GaussianNb),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    Svm(SvmModel),
    AdaBoost(AdaBoost),
    GradientBoosting(GradientBoosting),
}

impl Model {
    pub fn as_classifier(&self) -> &dyn Classifier {
        match self {
            Model::NaiveBayes(m) => m,
            Model::DecisionTree(m) => m,
            Model::RandomForest(m) => m,
            Model::Svm(m) => m,
            Model::AdaBoost(m) => m,
            Model::GradientBoosting(m) => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::NaiveBayes(_) => "naive_bayes",
            Model::DecisionTree(_) => "decision_tree",
            Model::RandomForest(_) => "random_forest",
            Model::Svm(_) => "svm",
            Model::AdaBoost(_) => "adaboost",
            Model::GradientBoosting(_) => "gradient_boosting",
        }
    }
}

impl Classifier for Model {
    fn n_classes(&self) -> usize {
        self.as_classifier().n_classes()
    }

    fn n_features(&self) -> usize {
        self.as_classifier().n_features()
    }

    fn proba_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.as_classifier().proba_unchecked(x)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SavedModel {
    format_version: u32,
    model: Model,
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&SavedModel {
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    })?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let saved: SavedModel = serde_json::from_str(&text)?;
    if saved.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "{}: format version {} (supported: {MODEL_FORMAT_VERSION})",
            path.display(),
            saved.format_version
        )));
    }
    Ok(saved.model)
}

#[cfg(test)]
pub(crate) mod testdata {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Three unit-variance blobs at (0,0), (5,5), (-5,5).
    pub fn blobs(per_class: usize, seed: u64) -> LabeledMatrix {
        let centres = [(0.0, 0.0), (5.0, 5.0), (-5.0, 5.0)];
        let mut rng = rng::stream(seed, 0);
        let mut x = Array2::zeros((per_class * 3, 2));
        let mut y = Vec::new();
        for (c, &(cx, cy)) in centres.iter().enumerate() {
            for i in 0..per_class {
                let r = c * per_class + i;
                let (nx, ny): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                x[[r, 0]] = cx + nx;
                x[[r, 1]] = cy + ny;
                y.push(c);
            }
        }
        LabeledMatrix::new(x, y, 3).unwrap()
    }

    pub fn random_matrix(n: usize, d: usize, k: usize, seed: u64) -> LabeledMatrix {
        let mut rng = rng::stream(seed, 0);
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-2.0..2.0));
        let y = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        LabeledMatrix::new(x, y, k).unwrap()
    }

    pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
        pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_matrix_validation() {
        let x = Array2::zeros((2, 3));
        assert!(LabeledMatrix::new(x.clone(), vec![0, 1], 2).is_ok());
        assert!(LabeledMatrix::new(x.clone(), vec![0, 2], 2).is_err());
        assert!(LabeledMatrix::new(x.clone(), vec![0], 2).is_err());
        assert!(LabeledMatrix::new(Array2::zeros((0, 3)), vec![], 2).is_err());
        let mut nan = x;
        nan[[1, 1]] = f64::NAN;
        assert!(LabeledMatrix::new(nan, vec![0, 1], 2).is_err());
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(argmax([0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax([1.0, 1.0]), 0);
    }

    #[test]
    fn save_and_load_every_kind() {
        let data = testdata::blobs(20, 3);
        let dir = tempfile::tempdir().unwrap();
        let models = vec![
            Model::NaiveBayes(train_gaussian_nb(&data).unwrap()),
            Model::DecisionTree(train_decision_tree(&data, &TreeConfig::default()).unwrap()),
            Model::RandomForest(train_random_forest(&data, &ForestConfig { n_trees: 5, ..Default::default() }).unwrap()),
            Model::Svm(train_svm_rbf(&data, &SvmConfig::default()).unwrap()),
            Model::AdaBoost(train_adaboost(&data, &BoostConfig::adaboost(10)).unwrap()),
            Model::GradientBoosting(train_gradient_boosting(&data, &BoostConfig::gradient(5)).unwrap()),
        ];
        for m in models {
            let path = dir.path().join(format!("{}.json", m.kind()));
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back.predict(data.x.view()).unwrap(), m.predict(data.x.view()).unwrap());
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = Model::NaiveBayes(train_gaussian_nb(&testdata::blobs(5, 1)).unwrap());
        save_model(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replace("\"format_version\": 1", "\"format_version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat(_))));
    }

    #[test]
    fn proba_contract_for_every_model() {
        let data = testdata::blobs(30, 8);
        let probe = testdata::random_matrix(50, 2, 3, 4).x.mapv(|v| v * 4.0);
        let models: Vec<Box<dyn Classifier>> = vec![
            Box::new(train_gaussian_nb(&data).unwrap()),
            Box::new(train_decision_tree(&data, &TreeConfig::default()).unwrap()),
            Box::new(train_random_forest(&data, &ForestConfig { n_trees: 7, ..Default::default() }).unwrap()),
            Box::new(train_svm_rbf(&data, &SvmConfig::default()).unwrap()),
            Box::new(train_adaboost(&data, &BoostConfig::adaboost(10)).unwrap()),
            Box::new(train_gradient_boosting(&data, &BoostConfig::gradient(5)).unwrap()),
        ];
        for m in &models {
            let p = m.predict_proba(probe.view()).unwrap();
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            let labels = m.predict(probe.view()).unwrap();
            let from_proba: Vec<usize> = p.rows().into_iter().map(|r| argmax(r.iter().copied())).collect();
            assert_eq!(labels, from_proba);
            assert!(labels.iter().all(|&l| l < 3));
            let empty = Array2::<f64>::zeros((0, 2));
            assert!(m.predict(empty.view()).unwrap().is_empty());
            assert!(m.predict(Array2::<f64>::zeros((2, 5)).view()).is_err());
        }
    }
}
