//! Layer forward and backward passes on `f64` tensors.
//!
//! Dense layers take `[batch, features]`; convolution, pooling and
//! channel-wise batch normalisation take `[batch, channels, height, width]`.

use ndarray::{s, Array1, Array2, Array4, ArrayD, Axis, Ix2, Ix4, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// `x` for `x > 0`, `exp(x) - 1` otherwise.
    Elu,
    /// Row-wise over the feature axis of a 2-D batch.
    Softmax,
    Identity,
}

/// Declarative layer description; parameters are created at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        units: usize,
        #[serde(default)]
        l1: f64,
        #[serde(default)]
        l2: f64,
    },
    /// Square kernel, stride 1, no padding.
    Conv2d {
        filters: usize,
        kernel: usize,
        #[serde(default)]
        l1: f64,
        #[serde(default)]
        l2: f64,
    },
    /// Non-overlapping square windows; trailing rows and columns that do
    /// not fill a window are dropped.
    MaxPool2d { pool: usize },
    Flatten,
    Dropout { rate: f64 },
    BatchNorm,
    Activation { activation: Activation },
}

pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    /// `w: [in, out]`, `b: [out]`.
    Dense { w: ArrayD<f64>, b: ArrayD<f64>, l1: f64, l2: f64 },
    /// `w: [filters, channels, k, k]`, `b: [filters]`.
    Conv2d { w: ArrayD<f64>, b: ArrayD<f64>, l1: f64, l2: f64 },
    MaxPool2d { pool: usize },
    Flatten,
    Dropout { rate: f64 },
    BatchNorm { gamma: ArrayD<f64>, beta: ArrayD<f64>, running_mean: Array1<f64>, running_var: Array1<f64> },
    Activation(Activation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Input(ArrayD<f64>),
    Pool { argmax: Vec<usize>, in_shape: Vec<usize> },
    Shape(Vec<usize>),
    Mask(Option<ArrayD<f64>>),
    /// `batch` holds the batch mean and variance in train mode.
    Norm { xhat: Array2<f64>, inv_std: Array1<f64>, in_shape: Vec<usize>, batch: Option<(Array1<f64>, Array1<f64>)> },
    Output(ArrayD<f64>),
}

fn view2(x: &ArrayD<f64>) -> ndarray::ArrayView2<'_, f64> {
    x.view().into_dimensionality::<Ix2>().expect("checked 2-D")
}

fn view4(x: &ArrayD<f64>) -> ndarray::ArrayView4<'_, f64> {
    x.view().into_dimensionality::<Ix4>().expect("checked 4-D")
}

/// `[n, c, h, w]` to `[n*h*w, c]`, channels last.
fn channels_last(x: &ArrayD<f64>) -> Array2<f64> {
    let v = view4(x);
    let (n, c, h, w) = v.dim();
    v.permuted_axes([0, 2, 3, 1])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((n * h * w, c))
        .expect("contiguous")
}

fn channels_first(x: Array2<f64>, shape: &[usize]) -> ArrayD<f64> {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    x.into_shape_with_order((n, h, w, c))
        .expect("matching size")
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .into_owned()
        .into_dyn()
}

pub(crate) fn softmax_2d(x: ndarray::ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::Flatten => "flatten",
            Layer::Dropout { .. } => "dropout",
            Layer::BatchNorm { .. } => "batchnorm",
            Layer::Activation(_) => "activation",
        }
    }

    /// Trainable tensors in a fixed order.
    pub fn params(&self) -> Vec<&ArrayD<f64>> {
        match self {
            Layer::Dense { w, b, .. } | Layer::Conv2d { w, b, .. } => vec![w, b],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ArrayD<f64>> {
        match self {
            Layer::Dense { w, b, .. } | Layer::Conv2d { w, b, .. } => vec![w, b],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    /// `Σ l1 |w| + l2 w²` over the weight tensor (biases are not penalised).
    pub fn penalty(&self) -> f64 {
        match self {
            Layer::Dense { w, l1, l2, .. } | Layer::Conv2d { w, l1, l2, .. } if *l1 > 0.0 || *l2 > 0.0 => {
                w.iter().map(|v| l1 * v.abs() + l2 * v * v).sum()
            }
            _ => 0.0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |want: &str| Err(Error::Shape(format!("{} expects {want}, got per-sample shape {input:?}", self.kind())));
        match self {
            Layer::Dense { w, .. } => match input {
                [f] if *f == w.shape()[0] => Ok(vec![w.shape()[1]]),
                _ => bad(&format!("[{}]", w.shape()[0])),
            },
            Layer::Conv2d { w, .. } => {
                let (c, k) = (w.shape()[1], w.shape()[2]);
                match input {
                    [ci, h, wd] if *ci == c && *h >= k && *wd >= k => Ok(vec![w.shape()[0], h - k + 1, wd - k + 1]),
                    _ => bad(&format!("[{c}, >={k}, >={k}]")),
                }
            }
            Layer::MaxPool2d { pool } => match input {
                [c, h, w] if h >= pool && w >= pool => Ok(vec![*c, h / pool, w / pool]),
                _ => bad(&format!("[c, >={pool}, >={pool}]")),
            },
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::BatchNorm { gamma, .. } => match input {
                [f] | [f, _, _] if *f == gamma.len() => Ok(input.to_vec()),
                _ => bad(&format!("[{}] or [{}, h, w]", gamma.len(), gamma.len())),
            },
            Layer::Activation(Activation::Softmax) => match input {
                [_] => Ok(input.to_vec()),
                _ => bad("a flat feature vector"),
            },
            Layer::Dropout { .. } | Layer::Activation(_) => Ok(input.to_vec()),
        }
    }

    pub fn forward(&self, x: ArrayD<f64>, mode: Mode, rng: &mut DetRng) -> (ArrayD<f64>, LayerCache) {
        match self {
            Layer::Dense { w, b, .. } => {
                let out = view2(&x).dot(&view2(w)) + &b.view();
                (out.into_dyn(), LayerCache::Input(x))
            }
            Layer::Conv2d { w, b, .. } => (conv_forward(&x, w, b), LayerCache::Input(x)),
            Layer::MaxPool2d { pool } => {
                let (out, argmax) = pool_forward(&x, *pool);
                (out, LayerCache::Pool { argmax, in_shape: x.shape().to_vec() })
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let n = shape[0];
                let flat = x.as_standard_layout().into_owned().into_shape_with_order(IxDyn(&[n, shape[1..].iter().product()]));
                (flat.expect("contiguous"), LayerCache::Shape(shape))
            }
            Layer::Dropout { rate } => {
                if mode == Mode::Eval || *rate == 0.0 {
                    return (x, LayerCache::Mask(None));
                }
                let keep = 1.0 - *rate;
                let mask = ArrayD::from_shape_fn(x.raw_dim(), |_| if rng.random::<f64>() < *rate { 0.0 } else { 1.0 / keep });
                (x * &mask, LayerCache::Mask(Some(mask)))
            }
            Layer::BatchNorm { gamma, beta, running_mean, running_var } => {
                let shape = x.shape().to_vec();
                let rows = if shape.len() == 4 { channels_last(&x) } else { view2(&x).to_owned() };
                let (mean, var) = if mode == Mode::Train {
                    (rows.mean_axis(Axis(0)).expect("non-empty batch"), rows.var_axis(Axis(0), 0.0))
                } else {
                    (running_mean.clone(), running_var.clone())
                };
                let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                let xhat = (&rows - &mean) * &inv_std;
                let g = gamma.view().into_dimensionality::<ndarray::Ix1>().expect("1-D");
                let bt = beta.view().into_dimensionality::<ndarray::Ix1>().expect("1-D");
                let out = &xhat * &g + &bt;
                let out = if shape.len() == 4 { channels_first(out, &shape) } else { out.into_dyn() };
                let batch = (mode == Mode::Train).then_some((mean, var));
                (out, LayerCache::Norm { xhat, inv_std, in_shape: shape, batch })
            }
            Layer::Activation(act) => {
                let out = match act {
                    Activation::Relu => x.mapv(|v| v.max(0.0)),
                    Activation::Elu => x.mapv(|v| if v > 0.0 { v } else { v.exp_m1() }),
                    Activation::Softmax => softmax_2d(view2(&x)).into_dyn(),
                    Activation::Identity => x,
                };
                (out.clone(), LayerCache::Output(out))
            }
        }
    }

    /// Folds train-mode batch statistics into the running averages.
    pub fn commit_running_stats(&mut self, cache: &LayerCache) {
        if let (Layer::BatchNorm { running_mean, running_var, .. }, LayerCache::Norm { batch: Some((mean, var)), .. }) = (self, cache) {
            running_mean.zip_mut_with(mean, |r, &m| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m);
            running_var.zip_mut_with(var, |r, &v| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v);
        }
    }

    /// Returns the input gradient and one gradient per [`Layer::params`]
    /// entry, penalty terms included.
    pub fn backward(&self, cache: &LayerCache, grad: ArrayD<f64>) -> (ArrayD<f64>, Vec<ArrayD<f64>>) {
        match (self, cache) {
            (Layer::Dense { w, l1, l2, .. }, LayerCache::Input(x)) => {
                let g = view2(&grad);
                let mut dw = view2(x).t().dot(&g).into_dyn();
                add_penalty_grad(&mut dw, w, *l1, *l2);
                let db = g.sum_axis(Axis(0)).into_dyn();
                let dx = g.dot(&view2(w).t()).into_dyn();
                (dx, vec![dw, db])
            }
            (Layer::Conv2d { w, l1, l2, .. }, LayerCache::Input(x)) => {
                let (dx, mut dw, db) = conv_backward(x, w, &grad);
                add_penalty_grad(&mut dw, w, *l1, *l2);
                (dx, vec![dw, db])
            }
            (Layer::MaxPool2d { .. }, LayerCache::Pool { argmax, in_shape }) => {
                let mut dx = vec![0.0; in_shape.iter().product()];
                for (&src, &g) in argmax.iter().zip(grad.iter()) {
                    dx[src] += g;
                }
                (ArrayD::from_shape_vec(IxDyn(in_shape), dx).expect("shape"), vec![])
            }
            (Layer::Flatten, LayerCache::Shape(shape)) => {
                let g = grad.as_standard_layout().into_owned().into_shape_with_order(IxDyn(shape)).expect("size");
                (g, vec![])
            }
            (Layer::Dropout { .. }, LayerCache::Mask(mask)) => match mask {
                Some(m) => (grad * m, vec![]),
                None => (grad, vec![]),
            },
            (Layer::BatchNorm { gamma, .. }, LayerCache::Norm { xhat, inv_std, in_shape, batch }) => {
                let g2 = if in_shape.len() == 4 { channels_last(&grad) } else { view2(&grad).to_owned() };
                let gm = gamma.view().into_dimensionality::<ndarray::Ix1>().expect("1-D");
                let dgamma = (&g2 * xhat).sum_axis(Axis(0));
                let dbeta = g2.sum_axis(Axis(0));
                let dxhat = &g2 * &gm;
                let dx = if batch.is_some() {
                    let m = g2.nrows() as f64;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                    (dxhat * m - &sum_dxhat - xhat * &sum_dxhat_xhat) * &(inv_std / m)
                } else {
                    // Running statistics are constants.
                    dxhat * inv_std
                };
                let dx = if in_shape.len() == 4 { channels_first(dx, in_shape) } else { dx.into_dyn() };
                (dx, vec![dgamma.into_dyn(), dbeta.into_dyn()])
            }
            (Layer::Activation(act), LayerCache::Output(out)) => {
                let dx = match act {
                    Activation::Relu => {
                        let mut g = grad;
                        g.zip_mut_with(out, |g, &y| if y <= 0.0 { *g = 0.0 });
                        g
                    }
                    Activation::Elu => {
                        let mut g = grad;
                        g.zip_mut_with(out, |g, &y| if y <= 0.0 { *g *= y + 1.0 });
                        g
                    }
                    Activation::Softmax => {
                        let (p, g) = (view2(out), view2(&grad));
                        let dot = (&p * &g).sum_axis(Axis(1)).insert_axis(Axis(1));
                        (&p * &(&g - &dot)).into_dyn()
                    }
                    Activation::Identity => grad,
                };
                (dx, vec![])
            }
            (layer, _) => unreachable!("cache does not belong to a {} layer", layer.kind()),
        }
    }
}

fn add_penalty_grad(dw: &mut ArrayD<f64>, w: &ArrayD<f64>, l1: f64, l2: f64) {
    if l1 > 0.0 || l2 > 0.0 {
        dw.zip_mut_with(w, |d, &v| {
            let sign = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            *d += l1 * sign + 2.0 * l2 * v;
        });
    }
}

/// Patch matrix `[c*k*k, oh*ow]` of one sample.
fn im2col(x: ndarray::ArrayView3<f64>, k: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut cols = Array2::zeros((c * k * k, oh * ow));
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = x.slice(s![ci, ki..ki + oh, kj..kj + ow]);
                let mut dst = cols.row_mut(row);
                for (d, &v) in dst.iter_mut().zip(src.iter()) {
                    *d = v;
                }
            }
        }
    }
    cols
}

fn col2im_add(cols: &Array2<f64>, dx: &mut ndarray::ArrayViewMut3<f64>, k: usize) {
    let (c, h, w) = dx.dim();
    let (oh, ow) = (h - k + 1, w - k + 1);
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = cols.row((ci * k + ki) * k + kj);
                let mut dst = dx.slice_mut(s![ci, ki..ki + oh, kj..kj + ow]);
                for (d, &v) in dst.iter_mut().zip(row.iter()) {
                    *d += v;
                }
            }
        }
    }
}

fn conv_weights_2d(w: &ArrayD<f64>) -> Array2<f64> {
    let f = w.shape()[0];
    let rest: usize = w.shape()[1..].iter().product();
    w.as_standard_layout().into_owned().into_shape_with_order((f, rest)).expect("contiguous")
}

fn conv_forward(x: &ArrayD<f64>, w: &ArrayD<f64>, b: &ArrayD<f64>) -> ArrayD<f64> {
    let x = view4(x);
    let (n, _, h, wd) = x.dim();
    let (f, k) = (w.shape()[0], w.shape()[2]);
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let wf = conv_weights_2d(w);
    let mut out = Array4::zeros((n, f, oh, ow));
    for i in 0..n {
        let y = wf.dot(&im2col(x.index_axis(Axis(0), i), k));
        let mut dst = out.index_axis_mut(Axis(0), i);
        for fi in 0..f {
            let bias = b[fi];
            for (d, &v) in dst.index_axis_mut(Axis(0), fi).iter_mut().zip(y.row(fi).iter()) {
                *d = v + bias;
            }
        }
    }
    out.into_dyn()
}

fn conv_backward(x: &ArrayD<f64>, w: &ArrayD<f64>, grad: &ArrayD<f64>) -> (ArrayD<f64>, ArrayD<f64>, ArrayD<f64>) {
    let xv = view4(x);
    let g = view4(grad);
    let (n, c, h, wd) = xv.dim();
    let (f, k) = (w.shape()[0], w.shape()[2]);
    let (oh, ow) = (h - k + 1, wd - k + 1);
    let wf = conv_weights_2d(w);
    let mut dwf = Array2::<f64>::zeros(wf.dim());
    let mut db = Array1::<f64>::zeros(f);
    let mut dx = Array4::<f64>::zeros((n, c, h, wd));
    for i in 0..n {
        let gi = g
            .index_axis(Axis(0), i)
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((f, oh * ow))
            .expect("contiguous");
        let cols = im2col(xv.index_axis(Axis(0), i), k);
        dwf += &gi.dot(&cols.t());
        db += &gi.sum_axis(Axis(1));
        let dcols = wf.t().dot(&gi);
        col2im_add(&dcols, &mut dx.index_axis_mut(Axis(0), i), k);
    }
    let dw = dwf.into_shape_with_order(IxDyn(w.shape())).expect("size");
    (dx.into_dyn(), dw, db.into_dyn())
}

fn pool_forward(x: &ArrayD<f64>, p: usize) -> (ArrayD<f64>, Vec<usize>) {
    let xv = view4(x);
    let (n, c, h, w) = xv.dim();
    let (oh, ow) = (h / p, w / p);
    let mut out = Array4::zeros((n, c, oh, ow));
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = (f64::NEG_INFINITY, 0);
                    for di in 0..p {
                        for dj in 0..p {
                            let (r, q) = (i * p + di, j * p + dj);
                            let v = xv[[ni, ci, r, q]];
                            // First maximum wins; NaN propagates.
                            if v > best.0 || v.is_nan() && !best.0.is_nan() {
                                best = (v, ((ni * c + ci) * h + r) * w + q);
                            }
                        }
                    }
                    if best.0 == f64::NEG_INFINITY {
                        best.1 = ((ni * c + ci) * h + i * p) * w + j * p;
                    }
                    out[[ni, ci, i, j]] = best.0;
                    argmax.push(best.1);
                }
            }
        }
    }
    (out.into_dyn(), argmax)
}
