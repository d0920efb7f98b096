use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_weighted, Criterion, DecisionTree, TreeConfig};
use super::{normalize_votes, Classifier, LabeledMatrix};
use crate::error::{Error, Result};
use crate::rng;

/// Candidate features per split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(d))`
    Sqrt,
    All,
    Count(usize),
    /// `ceil(fraction * d)`, at least 1.
    Fraction(f64),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> Result<usize> {
        let m = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Count(c) => c,
            MaxFeatures::Fraction(f) if f > 0.0 && f <= 1.0 => ((f * d as f64).ceil() as usize).max(1),
            MaxFeatures::Fraction(f) => return Err(Error::InvalidConfig(format!("max_features fraction {f} not in (0, 1]"))),
        };
        if m == 0 || m > d {
            return Err(Error::InvalidConfig(format!("max_features {m} outside 1..={d}")));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_leaf_nodes: Option<usize>,
    pub bootstrap: bool,
    pub criterion: Criterion,
    pub seed: u64,
}

impl Default for ForestConfig {
    /// 100 fully grown gini trees on bootstrap samples, `sqrt(d)` features.
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            max_features: MaxFeatures::Sqrt,
            min_samples_split: 2,
            max_leaf_nodes: None,
            bootstrap: true,
            criterion: Criterion::Gini,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Trains `n_trees` trees in parallel. Tree `t` draws its bootstrap and
/// feature subsets from `derive_seed(seed, t)`, so the forest does not
/// depend on thread scheduling.
pub fn train_random_forest(data: &LabeledMatrix, cfg: &ForestConfig) -> Result<RandomForest> {
    if cfg.n_trees == 0 {
        return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
    }
    let n = data.n_samples();
    let d = data.n_features();
    let tree_cfg = TreeConfig {
        max_depth: cfg.max_depth,
        min_samples_split: cfg.min_samples_split,
        max_leaf_nodes: cfg.max_leaf_nodes,
        max_features: Some(cfg.max_features.resolve(d)?),
        criterion: cfg.criterion,
        seed: 0,
    };
    let trees = (0..cfg.n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let seed = rng::derive_seed(cfg.seed, t);
            let mut weights = vec![0.0; n];
            if cfg.bootstrap {
                let mut boot = rng::stream(seed, 0);
                for _ in 0..n {
                    weights[boot.random_range(0..n)] += 1.0;
                }
            } else {
                weights.fill(1.0);
            }
            let mut split_rng = rng::stream(seed, 1);
            fit_weighted(data.x.view(), &data.y, data.n_classes, &weights, &tree_cfg, &mut split_rng)
        })
        .collect();
    Ok(RandomForest { trees, n_features: d, n_classes: data.n_classes })
}

impl RandomForest {
    /// Hard vote counts `[sample, class]`.
    pub fn votes(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut votes = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.rows().into_iter().enumerate() {
            for tree in &self.trees {
                votes[[i, tree.predict_row(row)]] += 1.0;
            }
        }
        votes
    }
}

impl Classifier for RandomForest {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    /// Vote fractions; the argmax is the plurality vote.
    fn proba_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        normalize_votes(self.votes(x))
    }
}
