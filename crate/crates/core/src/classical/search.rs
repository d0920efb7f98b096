use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::forest::{train_random_forest, ForestConfig, MaxFeatures};
use super::tree::Criterion;
use super::{Classifier, LabeledMatrix};
use crate::error::{Error, Result};
use crate::rng::{self, DetRng};

/// Discrete candidate values per forest hyperparameter; each sampled
/// configuration draws every field uniformly and independently.
///
/// Unlimited depth or leaf count is written as the string `"none"`, which
/// keeps the lists representable in formats without a null value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub n_trees: Vec<usize>,
    #[serde(with = "limits")]
    pub max_depth: Vec<Option<usize>>,
    pub max_features: Vec<MaxFeatures>,
    pub min_samples_split: Vec<usize>,
    #[serde(with = "limits")]
    pub max_leaf_nodes: Vec<Option<usize>>,
    pub bootstrap: Vec<bool>,
    pub criterion: Vec<Criterion>,
}

mod limits {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "snake_case")]
    enum Unlimited {
        None,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Limit {
        Value(usize),
        Unlimited(Unlimited),
    }

    pub fn serialize<S: Serializer>(v: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| match *x {
            Some(n) => Limit::Value(n),
            None => Limit::Unlimited(Unlimited::None),
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        let raw = Vec::<Limit>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|l| match l {
                Limit::Value(n) => Some(n),
                Limit::Unlimited(_) => None,
            })
            .collect())
    }
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_trees: vec![64, 128, 256, 512],
            max_depth: vec![None, Some(8), Some(16), Some(32), Some(64)],
            max_features: vec![MaxFeatures::Sqrt, MaxFeatures::Fraction(0.25), MaxFeatures::Fraction(0.5)],
            min_samples_split: vec![2, 5, 10],
            max_leaf_nodes: vec![None, Some(64), Some(256)],
            bootstrap: vec![true, false],
            criterion: vec![Criterion::Gini, Criterion::Entropy],
        }
    }
}

impl SearchSpace {
    /// A space holding exactly one configuration.
    pub fn single(cfg: &ForestConfig) -> Self {
        Self {
            n_trees: vec![cfg.n_trees],
            max_depth: vec![cfg.max_depth],
            max_features: vec![cfg.max_features],
            min_samples_split: vec![cfg.min_samples_split],
            max_leaf_nodes: vec![cfg.max_leaf_nodes],
            bootstrap: vec![cfg.bootstrap],
            criterion: vec![cfg.criterion],
        }
    }

    fn is_empty(&self) -> bool {
        self.n_trees.is_empty()
            || self.max_depth.is_empty()
            || self.max_features.is_empty()
            || self.min_samples_split.is_empty()
            || self.max_leaf_nodes.is_empty()
            || self.bootstrap.is_empty()
            || self.criterion.is_empty()
    }

    fn sample(&self, rng: &mut DetRng, seed: u64) -> ForestConfig {
        fn pick<T: Copy>(rng: &mut DetRng, values: &[T]) -> T {
            values[rng.random_range(0..values.len())]
        }
        ForestConfig {
            n_trees: pick(rng, &self.n_trees),
            max_depth: pick(rng, &self.max_depth),
            max_features: pick(rng, &self.max_features),
            min_samples_split: pick(rng, &self.min_samples_split),
            max_leaf_nodes: pick(rng, &self.max_leaf_nodes),
            bootstrap: pick(rng, &self.bootstrap),
            criterion: pick(rng, &self.criterion),
            seed,
        }
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub index: usize,
    pub config: ForestConfig,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Stratified fold assignment: each class's rows are shuffled and dealt
/// round-robin, so fold class counts differ by at most one.
pub fn stratified_folds(y: &[usize], n_classes: usize, k: usize, rng: &mut DetRng) -> Vec<usize> {
    let mut fold = vec![0; y.len()];
    let mut next = 0;
    for class in 0..n_classes {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(rng);
        for r in rows {
            fold[r] = next % k;
            next += 1;
        }
    }
    fold
}

/// Samples `n_iter` forest configurations and scores each by stratified
/// k-fold accuracy. Returns the best (first sampled on ties) and the table.
pub fn random_search(
    data: &LabeledMatrix,
    space: &SearchSpace,
    n_iter: usize,
    k_folds: usize,
    seed: u64,
) -> Result<(ForestConfig, Vec<CvRow>)> {
    if space.is_empty() {
        return Err(Error::InvalidConfig("search space has an empty dimension".into()));
    }
    if n_iter == 0 {
        return Err(Error::InvalidConfig("n_iter must be at least 1".into()));
    }
    if k_folds < 2 || k_folds > data.n_samples() {
        return Err(Error::InvalidConfig(format!("k_folds {k_folds} outside 2..={}", data.n_samples())));
    }
    let mut sampler = rng::stream(seed, 0);
    let configs: Vec<ForestConfig> = (0..n_iter).map(|_| space.sample(&mut sampler, seed)).collect();
    let folds = stratified_folds(&data.y, data.n_classes, k_folds, &mut rng::stream(seed, 1));
    let splits: Vec<(LabeledMatrix, LabeledMatrix)> = (0..k_folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..data.n_samples()).partition(|&i| folds[i] == f);
            (data.select(&train), data.select(&test))
        })
        .collect();

    let mut table = Vec::with_capacity(n_iter);
    for (index, config) in configs.into_iter().enumerate() {
        let mut fold_accuracy = Vec::with_capacity(k_folds);
        for (train, test) in &splits {
            let model = train_random_forest(train, &config)?;
            let pred = model.predict(test.x.view())?;
            let hits = pred.iter().zip(&test.y).filter(|(p, t)| p == t).count();
            fold_accuracy.push(hits as f64 / test.y.len() as f64);
        }
        let mean_accuracy = fold_accuracy.iter().sum::<f64>() / k_folds as f64;
        table.push(CvRow { index, config, fold_accuracy, mean_accuracy });
    }
    let mut best = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean_accuracy > table[best].mean_accuracy {
            best = i;
        }
    }
    Ok((table[best].config.clone(), table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::testdata::blobs;

    fn tiny(depths: Vec<Option<usize>>) -> SearchSpace {
        SearchSpace {
            n_trees: vec![10],
            max_depth: depths,
            ..SearchSpace::single(&ForestConfig::default())
        }
    }

    #[test]
    fn default_space_reaches_largest_values() {
        let s = SearchSpace::default();
        assert_eq!(s.n_trees.iter().max(), Some(&512));
        assert!(s.max_depth.contains(&Some(64)));
    }

    #[test]
    fn single_iteration_returns_its_config() {
        let data = blobs(10, 1);
        let space = tiny(vec![Some(3), Some(5)]);
        let (best, table) = random_search(&data, &space, 1, 3, 4).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(best, table[0].config);
    }

    #[test]
    fn prefers_deeper_trees_on_blobs() {
        // A single unbagged tree: one stump can separate at most two of
        // the three blobs.
        let data = blobs(40, 2);
        let space = SearchSpace {
            n_trees: vec![1],
            bootstrap: vec![false],
            max_features: vec![MaxFeatures::All],
            ..tiny(vec![Some(1), Some(16)])
        };
        let (best, table) = random_search(&data, &space, 6, 4, 11).unwrap();
        let depths: Vec<_> = table.iter().map(|r| r.config.max_depth).collect();
        assert!(depths.contains(&Some(1)) && depths.contains(&Some(16)), "{depths:?}");
        let mean_for = |depth| table.iter().find(|r| r.config.max_depth == depth).unwrap().mean_accuracy;
        assert!(mean_for(Some(1)) <= 2.0 / 3.0 + 1e-9);
        assert!(mean_for(Some(16)) > 0.9);
        assert_eq!(best.max_depth, Some(16));
    }

    #[test]
    fn reproducible() {
        let data = blobs(10, 3);
        let space = tiny(vec![Some(1), Some(2), Some(3), None]);
        assert_eq!(random_search(&data, &space, 3, 2, 7).unwrap(), random_search(&data, &space, 3, 2, 7).unwrap());
    }

    #[test]
    fn folds_are_stratified() {
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let folds = stratified_folds(&y, 3, 5, &mut rng::stream(1, 1));
        for f in 0..5 {
            for c in 0..3 {
                assert_eq!((0..30).filter(|&i| folds[i] == f && y[i] == c).count(), 2);
            }
        }
    }

    #[test]
    fn invalid_arguments() {
        let data = blobs(5, 1);
        let mut empty = tiny(vec![None]);
        empty.criterion.clear();
        assert!(random_search(&data, &empty, 1, 2, 0).is_err());
        assert!(random_search(&data, &tiny(vec![None]), 0, 2, 0).is_err());
        assert!(random_search(&data, &tiny(vec![None]), 1, 1, 0).is_err());
    }

    #[test]
    fn unlimited_entries_serialize_as_none() {
        let space = SearchSpace::default();
        let json = serde_json::to_string(&space).unwrap();
        assert!(json.contains(r#""max_depth":["none",8,16,32,64]"#), "{json}");
        assert_eq!(serde_json::from_str::<SearchSpace>(&json).unwrap(), space);
        assert!(serde_json::from_str::<SearchSpace>(r#"{"max_depth":["deep"]}"#).is_err());
    }
}
