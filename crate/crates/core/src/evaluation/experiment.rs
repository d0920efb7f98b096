use std::time::Instant;

use ndarray::{Array1, Array2, ArrayD, Axis, Ix2};
use serde::{Deserialize, Serialize};

use super::{accuracy, confusion_matrix, ConfusionMatrix};
use crate::classical::{
    random_search, train_adaboost, train_decision_tree, train_gaussian_nb, train_gradient_boosting, train_random_forest,
    train_svm_rbf, BoostConfig, Classifier, ForestConfig, LabeledMatrix, Model, SearchSpace, SvmConfig, TreeConfig,
};
use crate::error::{Error, Result};
use crate::neural::{build_preset, train, Network, NeuralData, Preset, PresetOptions, TrainConfig, TrainHistory};
use crate::rng::derive_seed;

fn default_n_iter() -> usize {
    20
}

fn default_folds() -> usize {
    3
}

fn default_ada_estimators() -> usize {
    50
}

fn default_ada_rate() -> f64 {
    1.0
}

/// What to train. Every seed field inside is overwritten per repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    NaiveBayes,
    DecisionTree(TreeConfig),
    RandomForest(ForestConfig),
    /// Random-search-tuned forest, refitted on the full training set.
    RandomSearch {
        #[serde(default)]
        space: SearchSpace,
        #[serde(default = "default_n_iter")]
        n_iter: usize,
        #[serde(default = "default_folds")]
        folds: usize,
    },
    Svm(SvmConfig),
    #[serde(rename = "adaboost")]
    AdaBoost {
        #[serde(default = "default_ada_estimators")]
        n_estimators: usize,
        #[serde(default = "default_ada_rate")]
        learning_rate: f64,
    },
    /// Plain or `xgb_regularized` according to `variant`.
    GradientBoosting(BoostConfig),
    Neural {
        preset: Preset,
        #[serde(default)]
        options: PresetOptions,
        #[serde(default)]
        train: TrainConfig,
    },
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::NaiveBayes => "naive_bayes".into(),
            ModelSpec::DecisionTree(_) => "decision_tree".into(),
            ModelSpec::RandomForest(_) => "random_forest".into(),
            ModelSpec::RandomSearch { .. } => "random_search_forest".into(),
            ModelSpec::Svm(_) => "svm".into(),
            ModelSpec::AdaBoost { .. } => "adaboost".into(),
            ModelSpec::GradientBoosting(c) => match c.variant {
                crate::classical::BoostVariant::XgbRegularized => "xgb_boosting".into(),
                _ => "gradient_boosting".into(),
            },
            ModelSpec::Neural { preset, .. } => preset.name().into(),
        }
    }
}

/// Per-feature standardisation fitted on training rows. Constant
/// features keep scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: ndarray::ArrayView2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Self { mean: mean.to_vec(), scale: scale.to_vec() }
    }

    pub fn apply(&self, x: &ArrayD<f64>) -> ArrayD<f64> {
        let m = Array1::from(self.mean.clone());
        let s = Array1::from(self.scale.clone());
        ((x - &m) / &s).into_dyn()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedModel {
    Classical {
        model: Model,
    },
    Neural {
        network: Network,
        /// One entry per input; `Some` for flat inputs.
        scalers: Vec<Option<Standardizer>>,
        history: TrainHistory,
    },
}

/// Classical models see the first input flattened to one row per sample.
fn flat_matrix(x: &ArrayD<f64>) -> Result<Array2<f64>> {
    let n = x.shape().first().copied().unwrap_or(0);
    let d = x.len().checked_div(n).unwrap_or(0);
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((n, d))
        .map_err(|e| Error::Shape(e.to_string()))
}

fn labeled(data: &NeuralData, k: usize) -> Result<LabeledMatrix> {
    if data.inputs.len() != 1 {
        return Err(Error::InvalidConfig(format!("classical models take one input, data has {}", data.inputs.len())));
    }
    LabeledMatrix::new(flat_matrix(&data.inputs[0])?, data.labels.clone(), k)
}

impl TrainedModel {
    pub fn predict_proba(&self, inputs: &[ArrayD<f64>]) -> Result<Array2<f64>> {
        match self {
            TrainedModel::Classical { model } => {
                if inputs.len() != 1 {
                    return Err(Error::Shape(format!("classical model takes one input, got {}", inputs.len())));
                }
                model.predict_proba(flat_matrix(&inputs[0])?.view())
            }
            TrainedModel::Neural { network, scalers, .. } => {
                let scaled: Vec<ArrayD<f64>> = inputs
                    .iter()
                    .zip(scalers.iter().chain(std::iter::repeat(&None)))
                    .map(|(x, s)| s.as_ref().map_or_else(|| x.clone(), |s| s.apply(x)))
                    .collect();
                network.predict_proba(&scaled)
            }
        }
    }

    pub fn predict(&self, inputs: &[ArrayD<f64>]) -> Result<Vec<usize>> {
        let p = self.predict_proba(inputs)?;
        Ok(p.rows().into_iter().map(|r| crate::classical::argmax(r.iter().copied())).collect())
    }

    pub fn n_classes(&self) -> usize {
        match self {
            TrainedModel::Classical { model } => model.n_classes(),
            TrainedModel::Neural { network, .. } => network.n_classes,
        }
    }
}

/// Trains `spec` with every seed set to `seed`. Returns the model and any
/// non-fatal notes (such as an SVM stopped at its iteration cap).
pub fn fit_model(
    spec: &ModelSpec,
    train_set: &NeuralData,
    valid: Option<&NeuralData>,
    n_classes: usize,
    seed: u64,
) -> Result<(TrainedModel, Vec<String>)> {
    let mut notes = Vec::new();
    let classical = |model| Ok((TrainedModel::Classical { model }, Vec::new()));
    match spec {
        ModelSpec::NaiveBayes => classical(Model::NaiveBayes(train_gaussian_nb(&labeled(train_set, n_classes)?)?)),
        ModelSpec::DecisionTree(cfg) => {
            let cfg = TreeConfig { seed, ..cfg.clone() };
            classical(Model::DecisionTree(train_decision_tree(&labeled(train_set, n_classes)?, &cfg)?))
        }
        ModelSpec::RandomForest(cfg) => {
            let cfg = ForestConfig { seed, ..cfg.clone() };
            classical(Model::RandomForest(train_random_forest(&labeled(train_set, n_classes)?, &cfg)?))
        }
        ModelSpec::RandomSearch { space, n_iter, folds } => {
            let data = labeled(train_set, n_classes)?;
            let (best, _) = random_search(&data, space, *n_iter, *folds, seed)?;
            classical(Model::RandomForest(train_random_forest(&data, &best)?))
        }
        ModelSpec::Svm(cfg) => {
            let cfg = SvmConfig { seed, ..cfg.clone() };
            let model = match train_svm_rbf(&labeled(train_set, n_classes)?, &cfg) {
                Ok(m) => m,
                Err(Error::SvmNotConverged { iterations, partial }) => {
                    notes.push(format!("svm stopped at the {iterations}-sweep cap; using the partial solution"));
                    *partial
                }
                Err(e) => return Err(e),
            };
            Ok((TrainedModel::Classical { model: Model::Svm(model) }, notes))
        }
        ModelSpec::AdaBoost { n_estimators, learning_rate } => {
            let cfg = BoostConfig { learning_rate: *learning_rate, seed, ..BoostConfig::adaboost(*n_estimators) };
            classical(Model::AdaBoost(train_adaboost(&labeled(train_set, n_classes)?, &cfg)?))
        }
        ModelSpec::GradientBoosting(cfg) => {
            let cfg = BoostConfig { seed, ..cfg.clone() };
            classical(Model::GradientBoosting(train_gradient_boosting(&labeled(train_set, n_classes)?, &cfg)?))
        }
        ModelSpec::Neural { preset, options, train: tcfg } => {
            let shapes: Vec<Vec<usize>> = train_set.inputs.iter().map(|x| x.shape()[1..].to_vec()).collect();
            let network = Network::build(&build_preset(*preset, &shapes, n_classes, options)?, seed)?;
            let scalers: Vec<Option<Standardizer>> = train_set
                .inputs
                .iter()
                .map(|x| (x.ndim() == 2).then(|| Standardizer::fit(x.view().into_dimensionality::<Ix2>().expect("2-D"))))
                .collect();
            let scale = |d: &NeuralData| NeuralData {
                inputs: d.inputs.iter().zip(&scalers).map(|(x, s)| s.as_ref().map_or_else(|| x.clone(), |s| s.apply(x))).collect(),
                labels: d.labels.clone(),
            };
            let (t, v) = (scale(train_set), valid.map(scale));
            let mut cfg = TrainConfig { seed, ..tcfg.clone() };
            if v.is_none() {
                cfg.early_stopping = None;
                notes.push("no validation set: early stopping disabled".into());
            }
            let (network, history) = train(network, &t, v.as_ref(), &cfg)?;
            Ok((TrainedModel::Neural { network, scalers, history }, notes))
        }
    }
}

/// Train, validation and test data for one per-class size.
#[derive(Debug, Clone)]
pub struct ExperimentSplits {
    pub train: NeuralData,
    pub valid: Option<NeuralData>,
    pub test: NeuralData,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub model_name: String,
    pub dataset_name: String,
    pub per_class_samples: usize,
    pub repeats: usize,
    pub test_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation; `None` for a single repeat.
    pub std_accuracy: Option<f64>,
    pub valid_mean_accuracy: Option<f64>,
    pub valid_std_accuracy: Option<f64>,
    /// Test confusion matrix of the most accurate repeat (first on ties).
    pub confusion: ConfusionMatrix,
    pub seconds: f64,
    pub notes: Vec<String>,
}

/// Mean and sample standard deviation, computed on deviations from the
/// first value so identical inputs give exactly zero spread.
pub fn mean_and_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let x0 = values[0];
    let shift = values.iter().map(|v| v - x0).sum::<f64>() / n;
    let mean = x0 + shift;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - x0) * (v - x0)).sum::<f64>() - n * shift * shift;
    (mean, Some((ss.max(0.0) / (n - 1.0)).sqrt()))
}

fn split_accuracy(model: &TrainedModel, data: &NeuralData, k: usize, names: &[String]) -> Result<(f64, ConfusionMatrix)> {
    let pred = model.predict(&data.inputs)?;
    let mut cm = confusion_matrix(&data.labels, &pred, k)?;
    if names.len() == k {
        cm.class_names = names.to_vec();
    }
    Ok((accuracy(&cm)?, cm))
}

/// Trains `repeats` models per size with seeds derived from `seed`, the
/// size and the repeat index, and scores each on the size's test split.
/// `load` supplies the splits for a per-class size.
pub fn run_experiment(
    spec: &ModelSpec,
    dataset_name: &str,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    mut load: impl FnMut(usize) -> Result<ExperimentSplits>,
) -> Result<Vec<ExperimentResult>> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }
    let mut results = Vec::with_capacity(sizes.len());
    for &per_class in sizes {
        let splits = load(per_class)?;
        let k = splits.class_names.len();
        let start = Instant::now();
        let (mut test_acc, mut valid_acc, mut notes) = (Vec::new(), Vec::new(), Vec::new());
        let mut best: Option<(f64, ConfusionMatrix)> = None;
        for r in 0..repeats {
            let s = derive_seed(derive_seed(seed, per_class as u64), r as u64);
            let (model, n) = fit_model(spec, &splits.train, splits.valid.as_ref(), k, s)?;
            notes.extend(n.into_iter().map(|m| format!("repeat {r}: {m}")));
            let (acc, cm) = split_accuracy(&model, &splits.test, k, &splits.class_names)?;
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, cm));
            }
            test_acc.push(acc);
            if let Some(v) = &splits.valid {
                valid_acc.push(split_accuracy(&model, v, k, &splits.class_names)?.0);
            }
        }
        let (mean_accuracy, std_accuracy) = mean_and_std(&test_acc);
        let (valid_mean_accuracy, valid_std_accuracy) = if valid_acc.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_and_std(&valid_acc);
            (Some(m), s)
        };
        results.push(ExperimentResult {
            model_name: spec.name(),
            dataset_name: dataset_name.to_string(),
            per_class_samples: per_class,
            repeats,
            test_accuracies: test_acc,
            mean_accuracy,
            std_accuracy,
            valid_mean_accuracy,
            valid_std_accuracy,
            confusion: best.expect("at least one repeat").1,
            seconds: start.elapsed().as_secs_f64(),
            notes,
        });
    }
    Ok(results)
}
