//! CART trees: weighted classification trees for the forest and the
//! boosted stumps, and second-order regression trees for gradient boosting.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{argmax, Classifier, LabeledMatrix};
use crate::error::Result;
use crate::rng::{self, DetRng};

/// Gains within this distance are treated as equal.
pub(crate) const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    #[default]
    Gini,
    Entropy,
}

impl Criterion {
    pub fn impurity(self, counts: &[f64], total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        match self {
            Criterion::Gini => 1.0 - counts.iter().map(|c| (c / total).powi(2)).sum::<f64>(),
            Criterion::Entropy => -counts
                .iter()
                .filter(|&&c| c > 0.0)
                .map(|c| (c / total) * (c / total).log2())
                .sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// `Some(n)` grows best-first until `n` leaves exist.
    pub max_leaf_nodes: Option<usize>,
    /// Candidate features drawn per split; `None` uses all of them.
    pub max_features: Option<usize>,
    pub criterion: Criterion,
    /// Drives feature subsampling only.
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            max_leaf_nodes: None,
            max_features: None,
            criterion: Criterion::Gini,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// `distribution` holds weighted class fractions; `class` is its argmax.
    Leaf { class: usize, distribution: Vec<f64> },
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Split {
    /// Larger gain wins; near-equal gains go to the lower feature, then
    /// the lower threshold.
    fn beats(&self, other: &Option<Split>) -> bool {
        match other {
            None => true,
            Some(o) if self.gain > o.gain + GAIN_TIE => true,
            Some(o) if self.gain >= o.gain - GAIN_TIE => (self.feature, self.threshold) < (o.feature, o.threshold),
            Some(_) => false,
        }
    }
}

/// Midpoint of two adjacent sorted values that still separates them.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let t = (lo + hi) / 2.0;
    if t >= hi {
        lo
    } else {
        t
    }
}

pub fn train_decision_tree(data: &LabeledMatrix, cfg: &TreeConfig) -> Result<DecisionTree> {
    let weights = vec![1.0; data.n_samples()];
    let mut rng = rng::stream(cfg.seed, 0);
    Ok(fit_weighted(data.x.view(), &data.y, data.n_classes, &weights, cfg, &mut rng))
}

struct Pending {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    split: Option<Split>,
    weight: f64,
}

/// Fits a classification tree; samples with zero weight are ignored.
pub fn fit_weighted(
    x: ArrayView2<f64>,
    y: &[usize],
    n_classes: usize,
    weights: &[f64],
    cfg: &TreeConfig,
    rng: &mut DetRng,
) -> DecisionTree {
    let d = x.ncols();
    let mut grower = Grower { x, y, k: n_classes, weights, cfg, rng, features: (0..d).collect() };
    let mut nodes = Vec::new();
    let root_rows: Vec<usize> = (0..y.len()).filter(|&i| weights[i] > 0.0).collect();
    let mut frontier = vec![grower.pending(&mut nodes, root_rows, 0)];
    let mut leaves = 1;
    loop {
        if cfg.max_leaf_nodes.is_some_and(|cap| leaves >= cap) {
            break;
        }
        let pick = if cfg.max_leaf_nodes.is_some() {
            // Best-first: largest weighted gain, earliest node on ties.
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in frontier.iter().enumerate() {
                if let Some(s) = p.split {
                    let score = s.gain * p.weight;
                    if best.is_none_or(|(_, b)| score > b + GAIN_TIE) {
                        best = Some((i, score));
                    }
                }
            }
            best.map(|(i, _)| i)
        } else {
            frontier.iter().rposition(|p| p.split.is_some())
        };
        let Some(i) = pick else { break };
        let p = frontier.swap_remove(i);
        let s = p.split.expect("picked splittable node");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            p.rows.iter().partition(|&&r| x[[r, s.feature]] <= s.threshold);
        let left = grower.pending(&mut nodes, left_rows, p.depth + 1);
        let right = grower.pending(&mut nodes, right_rows, p.depth + 1);
        nodes[p.node] = Node::Split { feature: s.feature, threshold: s.threshold, left: left.node, right: right.node };
        frontier.push(left);
        frontier.push(right);
        leaves += 1;
    }
    DecisionTree { nodes, n_features: d, n_classes }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    k: usize,
    weights: &'a [f64],
    cfg: &'a TreeConfig,
    rng: &'a mut DetRng,
    features: Vec<usize>,
}

impl Grower<'_> {
    fn class_weights(&self, rows: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.k];
        for &r in rows {
            c[self.y[r]] += self.weights[r];
        }
        c
    }

    /// Pushes a leaf for `rows` and records its best split, if any.
    fn pending(&mut self, nodes: &mut Vec<Node>, rows: Vec<usize>, depth: usize) -> Pending {
        let counts = self.class_weights(&rows);
        let total: f64 = counts.iter().sum();
        let distribution: Vec<f64> = if total > 0.0 {
            counts.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / self.k as f64; self.k]
        };
        nodes.push(Node::Leaf { class: argmax(distribution.iter().copied()), distribution });
        let can_split = self.cfg.max_depth.is_none_or(|m| depth < m)
            && rows.len() >= self.cfg.min_samples_split.max(2)
            && self.cfg.criterion.impurity(&counts, total) > GAIN_TIE;
        let split = if can_split { self.best_split(&rows, &counts, total) } else { None };
        Pending { node: nodes.len() - 1, rows, depth, split, weight: total }
    }

    fn best_split(&mut self, rows: &[usize], counts: &[f64], total: f64) -> Option<Split> {
        let d = self.features.len();
        let wanted = self.cfg.max_features.unwrap_or(d).clamp(1, d);
        if wanted < d {
            self.features.sort_unstable();
            self.features.shuffle(self.rng);
        }
        let parent = self.cfg.criterion.impurity(counts, total);
        let mut best: Option<Split> = None;
        let mut visited = 0;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for fi in 0..d {
            // Like the usual CART forests, keep drawing past constant
            // features until `wanted` informative ones have been seen.
            if visited >= wanted {
                break;
            }
            let f = if wanted < d { self.features[fi] } else { fi };
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (self.x[[r, f]], r)));
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if sorted[0].0 == sorted[sorted.len() - 1].0 {
                continue;
            }
            visited += 1;
            let mut left = vec![0.0; self.k];
            let mut left_total = 0.0;
            for p in 0..sorted.len() - 1 {
                let (v, r) = sorted[p];
                left[self.y[r]] += self.weights[r];
                left_total += self.weights[r];
                let next = sorted[p + 1].0;
                if next <= v {
                    continue;
                }
                let right: Vec<f64> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let right_total = total - left_total;
                let gain = parent
                    - left_total / total * self.cfg.criterion.impurity(&left, left_total)
                    - right_total / total * self.cfg.criterion.impurity(&right, right_total);
                let cand = Split { feature: f, threshold: midpoint(v, next), gain };
                if cand.beats(&best) {
                    best = Some(cand);
                }
            }
        }
        best
    }
}

impl DecisionTree {
    pub fn leaf(&self, x: ArrayView1<f64>) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> usize {
        match self.leaf(x) {
            Node::Leaf { class, .. } => *class,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Classifier for DecisionTree {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn proba_unchecked(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (i, row) in x.rows().into_iter().enumerate() {
            if let Node::Leaf { distribution, .. } = self.leaf(row) {
                out.row_mut(i).assign(&ArrayView1::from(distribution.as_slice()));
            }
        }
        out
    }
}

/// Second-order regression tree: splits maximise
/// `G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)` over `split_hess`, and leaves
/// hold `G/(H+λ)` over `leaf_hess`, where `G` sums the targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RegNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

pub(crate) struct RegressionTargets<'a> {
    pub grad: &'a [f64],
    pub split_hess: &'a [f64],
    pub leaf_hess: &'a [f64],
    pub lambda: f64,
}

fn leaf_value(sum_g: f64, sum_h: f64, lambda: f64) -> f64 {
    let denom = sum_h + lambda;
    if denom > 1e-12 {
        sum_g / denom
    } else {
        0.0
    }
}

impl RegressionTree {
    pub(crate) fn fit(x: ArrayView2<f64>, t: &RegressionTargets, max_depth: usize) -> RegressionTree {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let rows: Vec<usize> = (0..x.nrows()).collect();
        tree.grow(x, t, rows, 0, max_depth);
        tree
    }

    fn grow(&mut self, x: ArrayView2<f64>, t: &RegressionTargets, rows: Vec<usize>, depth: usize, max_depth: usize) -> usize {
        let id = self.nodes.len();
        let sum = |v: &[f64]| rows.iter().map(|&r| v[r]).sum::<f64>();
        let (g, hs, hl) = (sum(t.grad), sum(t.split_hess), sum(t.leaf_hess));
        self.nodes.push(RegNode::Leaf { value: leaf_value(g, hl, t.lambda) });
        if depth >= max_depth || rows.len() < 2 {
            return id;
        }
        let score = |g: f64, h: f64| if h + t.lambda > 1e-12 { g * g / (h + t.lambda) } else { 0.0 };
        let parent = score(g, hs);
        let mut best: Option<Split> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for f in 0..x.ncols() {
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (x[[r, f]], r)));
            sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (mut gl, mut hl_) = (0.0, 0.0);
            for p in 0..sorted.len() - 1 {
                let (v, r) = sorted[p];
                gl += t.grad[r];
                hl_ += t.split_hess[r];
                let next = sorted[p + 1].0;
                if next <= v {
                    continue;
                }
                let gain = score(gl, hl_) + score(g - gl, hs - hl_) - parent;
                let cand = Split { feature: f, threshold: midpoint(v, next), gain };
                if cand.beats(&best) {
                    best = Some(cand);
                }
            }
        }
        let Some(s) = best.filter(|s| s.gain > GAIN_TIE) else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[[i, s.feature]] <= s.threshold);
        let left = self.grow(x, t, l, depth + 1, max_depth);
        let right = self.grow(x, t, r, depth + 1, max_depth);
        self.nodes[id] = RegNode::Split { feature: s.feature, threshold: s.threshold, left, right };
        id
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                RegNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                RegNode::Leaf { value } => return *value,
            }
        }
    }
}
