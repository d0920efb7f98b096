//! Named architectures. Every width is overridable through
//! [`PresetOptions`]; the defaults are fixed for reproducibility.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Activation, BranchSpec, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    SimpleAnn,
    DropoutAnn,
    ComplexAnn,
    CnnIc,
    DualInput,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::SimpleAnn, Preset::DropoutAnn, Preset::ComplexAnn, Preset::CnnIc, Preset::DualInput];

    pub fn name(self) -> &'static str {
        match self {
            Preset::SimpleAnn => "simple_ann",
            Preset::DropoutAnn => "dropout_ann",
            Preset::ComplexAnn => "complex_ann",
            Preset::CnnIc => "cnn_ic",
            Preset::DualInput => "dual_input",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {s:?}; expected one of simple_ann, dropout_ann, complex_ann, cnn_ic, dual_input")))
    }
}

/// Overrides for preset widths and rates; `None` keeps the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresetOptions {
    /// Hidden dense widths (numeric branch widths for `dual_input`).
    pub hidden: Option<Vec<usize>>,
    /// Convolution filter counts, in order.
    pub filters: Option<Vec<usize>>,
    pub dropout: Option<f64>,
    /// Dense widths after concatenation in `dual_input`.
    pub head: Option<Vec<usize>>,
}

fn dense(units: usize) -> LayerSpec {
    LayerSpec::Dense { units, l1: 0.0, l2: 0.0 }
}

fn act(activation: Activation) -> LayerSpec {
    LayerSpec::Activation { activation }
}

fn classifier(k: usize) -> [LayerSpec; 2] {
    [dense(k), act(Activation::Softmax)]
}

fn expect_len<T: fmt::Debug>(what: &str, v: &[T], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidConfig(format!("{what} needs {n} entries, got {v:?}")));
    }
    Ok(())
}

fn flat_input(preset: Preset, dims: &[usize]) -> Result<Vec<usize>> {
    match dims {
        [d] if *d > 0 => Ok(vec![*d]),
        _ => Err(Error::InvalidConfig(format!("{preset} takes a flat feature vector, got input dims {dims:?}"))),
    }
}

fn image_input(preset: Preset, dims: &[usize]) -> Result<Vec<usize>> {
    match dims {
        [c, h, w] if *c > 0 && *h > 0 && *w > 0 => Ok(dims.to_vec()),
        _ => Err(Error::InvalidConfig(format!("{preset} takes [channels, height, width] images, got {dims:?}"))),
    }
}

/// Architecture for `preset`. `inputs` holds one per-sample shape per
/// input: a feature count for the dense presets, `[c, h, w]` for
/// `cnn_ic`, and `[c, h, w]` then a feature count for `dual_input`.
pub fn build_preset(preset: Preset, inputs: &[Vec<usize>], k: usize, opts: &PresetOptions) -> Result<NetworkSpec> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("{preset} needs at least 2 classes, got {k}")));
    }
    let want_inputs = if preset == Preset::DualInput { 2 } else { 1 };
    if inputs.len() != want_inputs {
        return Err(Error::InvalidConfig(format!("{preset} takes {want_inputs} input(s), got {}", inputs.len())));
    }
    let single = |input_shape: Vec<usize>, layers: Vec<LayerSpec>| NetworkSpec {
        branches: vec![BranchSpec { input_shape, layers }],
        head: Vec::new(),
    };
    let spec = match preset {
        Preset::SimpleAnn | Preset::DropoutAnn => {
            let hidden = opts.hidden.clone().unwrap_or_else(|| vec![256, 128]);
            let rate = (preset == Preset::DropoutAnn).then(|| opts.dropout.unwrap_or(0.3));
            let mut layers = Vec::new();
            for &u in &hidden {
                layers.extend([dense(u), act(Activation::Relu)]);
                layers.extend(rate.map(|rate| LayerSpec::Dropout { rate }));
            }
            layers.extend(classifier(k));
            single(flat_input(preset, &inputs[0])?, layers)
        }
        Preset::ComplexAnn => {
            let hidden = opts.hidden.clone().unwrap_or_else(|| vec![512, 256, 128]);
            let rate = opts.dropout.unwrap_or(0.3);
            let mut layers = Vec::new();
            for &units in &hidden {
                layers.extend([
                    LayerSpec::Dense { units, l1: 1e-5, l2: 1e-5 },
                    LayerSpec::BatchNorm,
                    act(Activation::Relu),
                    LayerSpec::Dropout { rate },
                ]);
            }
            layers.extend(classifier(k));
            single(flat_input(preset, &inputs[0])?, layers)
        }
        Preset::CnnIc => {
            let filters = opts.filters.clone().unwrap_or_else(|| vec![32, 128]);
            expect_len("cnn_ic filters", &filters, 2)?;
            let hidden = opts.hidden.clone().unwrap_or_else(|| vec![1024, 256, 64]);
            let rate = opts.dropout.unwrap_or(0.4);
            let mut layers = vec![
                LayerSpec::Conv2d { filters: filters[0], kernel: 3, l1: 0.0, l2: 1e-4 },
                act(Activation::Elu),
                LayerSpec::MaxPool2d { pool: 2 },
                LayerSpec::Conv2d { filters: filters[1], kernel: 3, l1: 0.0, l2: 1e-4 },
                act(Activation::Relu),
                LayerSpec::MaxPool2d { pool: 2 },
                LayerSpec::Flatten,
            ];
            for &units in &hidden {
                layers.extend([LayerSpec::Dense { units, l1: 1e-5, l2: 0.0 }, act(Activation::Relu), LayerSpec::Dropout { rate }]);
            }
            layers.extend(classifier(k));
            single(image_input(preset, &inputs[0])?, layers)
        }
        Preset::DualInput => {
            let filters = opts.filters.clone().unwrap_or_else(|| vec![32, 64]);
            expect_len("dual_input filters", &filters, 2)?;
            let hidden = opts.hidden.clone().unwrap_or_else(|| vec![64, 32]);
            let head = opts.head.clone().unwrap_or_else(|| vec![64]);
            let image = vec![
                LayerSpec::Conv2d { filters: filters[0], kernel: 3, l1: 0.0, l2: 0.0 },
                act(Activation::Relu),
                LayerSpec::Conv2d { filters: filters[1], kernel: 3, l1: 0.0, l2: 0.0 },
                act(Activation::Relu),
                LayerSpec::MaxPool2d { pool: 2 },
                LayerSpec::Flatten,
            ];
            let numeric = hidden.iter().flat_map(|&u| [dense(u), act(Activation::Relu)]).collect();
            let mut head_layers: Vec<LayerSpec> = head.iter().flat_map(|&u| [dense(u), act(Activation::Relu)]).collect();
            head_layers.extend(classifier(k));
            NetworkSpec {
                branches: vec![
                    BranchSpec { input_shape: image_input(preset, &inputs[0])?, layers: image },
                    BranchSpec { input_shape: flat_input(preset, &inputs[1])?, layers: numeric },
                ],
                head: head_layers,
            }
        }
    };
    if let Some(rate) = opts.dropout {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
        }
    }
    Ok(spec)
}
