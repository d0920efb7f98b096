//! Small dense and convolutional networks trained with reverse-mode
//! gradients and Adam.
//!
//! A network has one or more input branches and a shared head. With a
//! single branch its output feeds the head directly; with several, every
//! branch must end flat and the outputs are concatenated along the
//! feature axis before the head. The last layer is a softmax and training
//! minimises mean categorical cross-entropy plus the layers' L1/L2
//! penalties.

pub mod io;
pub mod layers;
pub mod presets;
pub mod train;

use ndarray::{concatenate, s, Array2, ArrayD, Axis, Ix2, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use layers::{Activation, Layer, LayerCache, LayerSpec, Mode};
pub use presets::{build_preset, Preset, PresetOptions};
pub use train::{evaluate, train, train_dual_input, Adam, DualInputSet, EarlyStopping, EpochRecord, LrSchedule, TrainConfig, TrainHistory};

use crate::error::{Error, Result};
use crate::rng::{self, DetRng};

/// One input path: per-sample input shape and its layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub branches: Vec<BranchSpec>,
    pub head: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub branches: Vec<Vec<Layer>>,
    pub head: Vec<Layer>,
    pub n_classes: usize,
}

/// Everything a train-mode forward pass keeps for backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    branches: Vec<Vec<LayerCache>>,
    head: Vec<LayerCache>,
    /// Feature width of each branch output, for splitting the head gradient.
    widths: Vec<usize>,
    /// Name of the first layer whose output held a non-finite value.
    pub first_non_finite: Option<String>,
}

/// Upper bound of the init range for a weight tensor with `fan_in`
/// inputs: He-uniform when a ReLU or ELU follows, LeCun-uniform otherwise.
fn init_limit(fan_in: usize, rectified: bool) -> f64 {
    let scale = if rectified { 6.0 } else { 3.0 };
    (scale / fan_in as f64).sqrt()
}

/// Whether the next activation after position `i` is ReLU or ELU.
fn rectified_after(specs: &[LayerSpec], i: usize) -> bool {
    specs[i + 1..]
        .iter()
        .find_map(|s| match s {
            LayerSpec::Activation { activation } => Some(matches!(activation, Activation::Relu | Activation::Elu)),
            LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } => Some(false),
            _ => None,
        })
        .unwrap_or(false)
}

fn build_layers(specs: &[LayerSpec], mut shape: Vec<usize>, rng: &mut DetRng, path: &str) -> Result<(Vec<Layer>, Vec<usize>)> {
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let name = format!("{path}.{i}");
        let bad = |msg: String| Error::InvalidConfig(format!("layer {name}: {msg}"));
        let layer = match *spec {
            LayerSpec::Dense { units, l1, l2 } => {
                if units == 0 || l1 < 0.0 || l2 < 0.0 {
                    return Err(bad("dense needs units >= 1 and non-negative penalties".into()));
                }
                let fan_in = shape.first().copied().filter(|_| shape.len() == 1).ok_or_else(|| {
                    Error::Shape(format!("layer {name} (dense) expects a flat input, got per-sample shape {shape:?}"))
                })?;
                let lim = init_limit(fan_in, rectified_after(specs, i));
                let w = ArrayD::from_shape_fn(IxDyn(&[fan_in, units]), |_| rng.random_range(-lim..lim));
                Layer::Dense { w, b: ArrayD::zeros(IxDyn(&[units])), l1, l2 }
            }
            LayerSpec::Conv2d { filters, kernel, l1, l2 } => {
                if filters == 0 || kernel == 0 || l1 < 0.0 || l2 < 0.0 {
                    return Err(bad("conv2d needs filters, kernel >= 1 and non-negative penalties".into()));
                }
                let channels = shape.first().copied().filter(|_| shape.len() == 3).ok_or_else(|| {
                    Error::Shape(format!("layer {name} (conv2d) expects [c, h, w], got per-sample shape {shape:?}"))
                })?;
                let lim = init_limit(channels * kernel * kernel, rectified_after(specs, i));
                let w = ArrayD::from_shape_fn(IxDyn(&[filters, channels, kernel, kernel]), |_| rng.random_range(-lim..lim));
                Layer::Conv2d { w, b: ArrayD::zeros(IxDyn(&[filters])), l1, l2 }
            }
            LayerSpec::MaxPool2d { pool } => {
                if pool == 0 {
                    return Err(bad("pool must be at least 1".into()));
                }
                Layer::MaxPool2d { pool }
            }
            LayerSpec::Flatten => Layer::Flatten,
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(bad(format!("dropout rate {rate} outside [0, 1)")));
                }
                Layer::Dropout { rate }
            }
            LayerSpec::BatchNorm => {
                let c = *shape.first().ok_or_else(|| bad("batchnorm on a scalar input".into()))?;
                Layer::BatchNorm {
                    gamma: ArrayD::ones(IxDyn(&[c])),
                    beta: ArrayD::zeros(IxDyn(&[c])),
                    running_mean: ndarray::Array1::zeros(c),
                    running_var: ndarray::Array1::ones(c),
                }
            }
            LayerSpec::Activation { activation } => Layer::Activation(activation),
        };
        shape = layer.output_shape(&shape).map_err(|e| Error::Shape(format!("layer {name}: {e}")))?;
        layers.push(layer);
    }
    Ok((layers, shape))
}

fn has_non_finite(x: &ArrayD<f64>) -> bool {
    x.iter().any(|v| !v.is_finite())
}

impl Network {
    /// Creates parameters from `spec`, drawing initial weights from
    /// stream 0 of `seed` in layer order (branches first, then the head).
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Network> {
        if spec.branches.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one input branch".into()));
        }
        let mut rng = rng::stream(seed, 0);
        let mut branches = Vec::new();
        let mut out_shapes = Vec::new();
        for (b, branch) in spec.branches.iter().enumerate() {
            if branch.input_shape.is_empty() || branch.input_shape.contains(&0) {
                return Err(Error::InvalidConfig(format!("branch {b}: invalid input shape {:?}", branch.input_shape)));
            }
            let (layers, out) = build_layers(&branch.layers, branch.input_shape.clone(), &mut rng, &format!("branch{b}"))?;
            branches.push(layers);
            out_shapes.push(out);
        }
        let head_in = if out_shapes.len() == 1 {
            out_shapes[0].clone()
        } else {
            if let Some((b, s)) = out_shapes.iter().enumerate().find(|(_, s)| s.len() != 1) {
                return Err(Error::Shape(format!("branch {b} must end flat to be concatenated, ends with {s:?}")));
            }
            vec![out_shapes.iter().map(|s| s[0]).sum()]
        };
        let (head, out) = build_layers(&spec.head, head_in, &mut rng, "head")?;
        if spec.branches.len() > 1 && head.is_empty() {
            return Err(Error::InvalidConfig("a multi-input network needs a head".into()));
        }
        let last = head.last().or_else(|| branches[0].last());
        if out.len() != 1 {
            return Err(Error::InvalidConfig(format!("network must end with flat class scores, ends with {out:?}")));
        }
        if !matches!(last, Some(Layer::Activation(Activation::Softmax))) {
            return Err(Error::InvalidConfig("network must end with a softmax activation".into()));
        }
        Ok(Network { spec: spec.clone(), branches, head, n_classes: out[0] })
    }

    fn all_layers(&self) -> impl Iterator<Item = &Layer> {
        self.branches.iter().flatten().chain(self.head.iter())
    }

    pub fn params(&self) -> Vec<&ArrayD<f64>> {
        self.all_layers().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ArrayD<f64>> {
        self.branches.iter_mut().flatten().chain(self.head.iter_mut()).flat_map(|l| l.params_mut()).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn penalty(&self) -> f64 {
        self.all_layers().map(Layer::penalty).sum()
    }

    pub fn input_shapes(&self) -> Vec<Vec<usize>> {
        self.spec.branches.iter().map(|b| b.input_shape.clone()).collect()
    }

    /// Checks batch inputs against the branch input shapes; returns the
    /// batch size.
    pub fn check_inputs(&self, inputs: &[ArrayD<f64>]) -> Result<usize> {
        if inputs.len() != self.branches.len() {
            return Err(Error::Shape(format!("network has {} inputs, got {}", self.branches.len(), inputs.len())));
        }
        let n = inputs[0].shape().first().copied().unwrap_or(0);
        for (b, (x, spec)) in inputs.iter().zip(&self.spec.branches).enumerate() {
            if x.ndim() == 0 || x.shape()[0] != n || x.shape()[1..] != spec.input_shape[..] {
                return Err(Error::Shape(format!(
                    "input {b}: expected [{n}, {}], got {:?}",
                    spec.input_shape.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
                    x.shape()
                )));
            }
        }
        Ok(n)
    }

    /// Softmax outputs `[batch, classes]`. Train mode applies dropout
    /// masks drawn from `rng` and batch-norm batch statistics.
    pub fn forward(&self, inputs: &[ArrayD<f64>], mode: Mode, rng: &mut DetRng) -> Result<(Array2<f64>, ForwardCache)> {
        let n = self.check_inputs(inputs)?;
        if n == 0 {
            return Ok((Array2::zeros((0, self.n_classes)), ForwardCache::default()));
        }
        let mut cache = ForwardCache::default();
        let mut outs = Vec::with_capacity(self.branches.len());
        for (b, (layers, x)) in self.branches.iter().zip(inputs).enumerate() {
            let mut x = x.clone();
            let mut caches = Vec::with_capacity(layers.len());
            for (i, layer) in layers.iter().enumerate() {
                let (y, c) = layer.forward(x, mode, rng);
                if cache.first_non_finite.is_none() && has_non_finite(&y) {
                    cache.first_non_finite = Some(format!("branch{b}.{i} ({})", layer.kind()));
                }
                x = y;
                caches.push(c);
            }
            cache.branches.push(caches);
            outs.push(x);
        }
        let mut x = if outs.len() == 1 {
            outs.pop().expect("one branch")
        } else {
            let views: Vec<_> = outs.iter().map(|o| o.view().into_dimensionality::<Ix2>().expect("flat branch")).collect();
            cache.widths = views.iter().map(|v| v.ncols()).collect();
            concatenate(Axis(1), &views).expect("equal batch sizes").into_dyn()
        };
        for (i, layer) in self.head.iter().enumerate() {
            let (y, c) = layer.forward(x, mode, rng);
            if cache.first_non_finite.is_none() && has_non_finite(&y) {
                cache.first_non_finite = Some(format!("head.{i} ({})", layer.kind()));
            }
            x = y;
            cache.head.push(c);
        }
        let out = x.into_dimensionality::<Ix2>().map_err(|e| Error::Shape(e.to_string()))?;
        Ok((out, cache))
    }

    /// Parameter gradients, in [`Network::params`] order, of `<grad, output>`
    /// plus the penalties. With `from_logits`, `grad` is taken with respect
    /// to the input of the final softmax, which is then skipped.
    pub fn backward(&self, cache: &ForwardCache, grad: Array2<f64>, from_logits: bool) -> Vec<ArrayD<f64>> {
        let mut head_grads: Vec<Vec<ArrayD<f64>>> = Vec::with_capacity(self.head.len());
        let mut g = grad.into_dyn();
        let mut skip = from_logits;
        for (layer, c) in self.head.iter().zip(&cache.head).rev() {
            if std::mem::take(&mut skip) {
                continue;
            }
            let (dx, dp) = layer.backward(c, g);
            g = dx;
            head_grads.push(dp);
        }
        let branch_grads_in: Vec<ArrayD<f64>> = if self.branches.len() == 1 {
            vec![g]
        } else {
            let g2 = g.into_dimensionality::<Ix2>().expect("flat head input");
            let mut start = 0;
            cache
                .widths
                .iter()
                .map(|&w| {
                    let part = g2.slice(s![.., start..start + w]).to_owned().into_dyn();
                    start += w;
                    part
                })
                .collect()
        };
        let mut grads = Vec::new();
        for ((layers, caches), mut g) in self.branches.iter().zip(&cache.branches).zip(branch_grads_in) {
            let mut per_layer = Vec::with_capacity(layers.len());
            for (layer, c) in layers.iter().zip(caches).rev() {
                if std::mem::take(&mut skip) {
                    continue;
                }
                let (dx, dp) = layer.backward(c, g);
                g = dx;
                per_layer.push(dp);
            }
            grads.extend(per_layer.into_iter().rev().flatten());
        }
        grads.extend(head_grads.into_iter().rev().flatten());
        grads
    }

    /// Folds batch-norm batch statistics from a train-mode pass into the
    /// running averages.
    pub fn commit_running_stats(&mut self, cache: &ForwardCache) {
        for (layers, caches) in self.branches.iter_mut().zip(&cache.branches) {
            for (layer, c) in layers.iter_mut().zip(caches) {
                layer.commit_running_stats(c);
            }
        }
        for (layer, c) in self.head.iter_mut().zip(&cache.head) {
            layer.commit_running_stats(c);
        }
    }

    /// Eval-mode class probabilities, computed in chunks of `batch` rows.
    pub fn predict_proba(&self, inputs: &[ArrayD<f64>]) -> Result<Array2<f64>> {
        const CHUNK: usize = 256;
        let n = self.check_inputs(inputs)?;
        let mut rng = rng::stream(0, 0);
        let mut parts = Vec::new();
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let chunk: Vec<ArrayD<f64>> = inputs.iter().map(|x| x.slice_axis(Axis(0), (start..end).into()).to_owned()).collect();
            parts.push(self.forward(&chunk, Mode::Eval, &mut rng)?.0);
        }
        if parts.is_empty() {
            return Ok(Array2::zeros((0, self.n_classes)));
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(concatenate(Axis(0), &views).expect("same width"))
    }

    pub fn predict(&self, inputs: &[ArrayD<f64>]) -> Result<Vec<usize>> {
        let p = self.predict_proba(inputs)?;
        Ok(p.rows().into_iter().map(|r| crate::classical::argmax(r.iter().copied())).collect())
    }
}

impl Default for ForwardCache {
    fn default() -> Self {
        Self { branches: Vec::new(), head: Vec::new(), widths: Vec::new(), first_non_finite: None }
    }
}

/// Mean categorical cross-entropy and its gradient with respect to the
/// softmax logits, `(p - onehot) / n`.
pub fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let n = labels.len().max(1) as f64;
    let mut grad = probs.clone();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = probs[[i, y]];
        // `max` would swallow a NaN probability.
        loss -= if p.is_nan() { p } else { p.max(f64::MIN_POSITIVE).ln() };
        grad[[i, y]] -= 1.0;
    }
    grad /= n;
    (loss / n, grad)
}

/// Inputs and labels for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralData {
    /// One tensor per branch, samples along axis 0.
    pub inputs: Vec<ArrayD<f64>>,
    pub labels: Vec<usize>,
}

impl NeuralData {
    pub fn new(inputs: Vec<ArrayD<f64>>, labels: Vec<usize>) -> Result<Self> {
        for (b, x) in inputs.iter().enumerate() {
            if x.ndim() < 2 || x.shape()[0] != labels.len() {
                return Err(Error::Shape(format!(
                    "input {b} has shape {:?} for {} labels",
                    x.shape(),
                    labels.len()
                )));
            }
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> NeuralData {
        NeuralData {
            inputs: self.inputs.iter().map(|x| x.select(Axis(0), rows)).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
