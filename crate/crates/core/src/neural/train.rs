use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayD, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{cross_entropy, Mode, Network, NeuralData};
use crate::classical::argmax;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Multiplies the rate by `factor` after every `every` epochs.
    Step { factor: f64, every: usize },
}

impl LrSchedule {
    /// Rate for the zero-based `epoch`.
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::Step { factor, every } => base * factor.powi((epoch / every) as i32),
        }
    }
}

/// Stops once validation loss has not improved for `patience` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub optimizer: Adam,
    pub lr_schedule: LrSchedule,
    /// `None` trains for `max_epochs` and keeps the final parameters.
    /// Serialized as `"off"` so that disabling survives a round trip.
    #[serde(with = "early_stopping_repr")]
    pub early_stopping: Option<EarlyStopping>,
    pub seed: u64,
}

mod early_stopping_repr {
    use super::EarlyStopping;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "snake_case")]
    enum Off {
        Off,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        On(EarlyStopping),
        Off(Off),
    }

    pub fn serialize<S: Serializer>(v: &Option<EarlyStopping>, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            Some(es) => Repr::On(es),
            None => Repr::Off(Off::Off),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<EarlyStopping>, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::On(es) => Some(es),
            Repr::Off(_) => None,
        })
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            max_epochs: 100,
            optimizer: Adam::default(),
            lr_schedule: LrSchedule::Step { factor: 0.5, every: 50 },
            early_stopping: Some(EarlyStopping { patience: 10 }),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if matches!(self.early_stopping, Some(EarlyStopping { patience: 0 })) {
            return bad("patience must be at least 1");
        }
        if let LrSchedule::Step { factor, every } = self.lr_schedule {
            if every == 0 || !(factor > 0.0) {
                return bad("step schedule needs every >= 1 and factor > 0");
            }
        }
        let a = &self.optimizer;
        if !(a.lr >= 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("adam needs lr >= 0, betas in [0, 1) and eps > 0");
        }
        Ok(())
    }
}

/// One row of the training history. Validation fields are NaN when no
/// validation set was given, and serialize as null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    #[serde(with = "nan_as_null")]
    pub val_loss: f64,
    #[serde(with = "nan_as_null")]
    pub val_acc: f64,
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// `epochs.len() == stopped_epoch`.
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    /// One-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])?;
        for r in &self.epochs {
            w.write_record(&[
                r.epoch.to_string(),
                format!("{:.9}", r.train_loss),
                format!("{:.9}", r.train_acc),
                format!("{:.9}", r.val_loss),
                format!("{:.9}", r.val_acc),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loss (cross-entropy plus penalties) and accuracy in eval mode.
pub fn evaluate(net: &Network, data: &NeuralData) -> Result<(f64, f64)> {
    let probs = net.predict_proba(&data.inputs)?;
    let (ce, _) = cross_entropy(&probs, &data.labels);
    Ok((ce + net.penalty(), accuracy(&probs, &data.labels)))
}

fn accuracy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return f64::NAN;
    }
    let hits = probs.rows().into_iter().zip(labels).filter(|(r, &y)| argmax(r.iter().copied()) == y).count();
    hits as f64 / labels.len() as f64
}

struct AdamState {
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
    t: i32,
}

impl AdamState {
    fn new(net: &Network) -> Self {
        let zeros: Vec<_> = net.params().iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, net: &mut Network, grads: &[ArrayD<f64>], cfg: &Adam, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in net.params_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            m.zip_mut_with(g, |m, &g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                *p -= lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
            });
        }
    }
}

fn check_labels(net: &Network, data: &NeuralData, what: &str) -> Result<()> {
    net.check_inputs(&data.inputs).map_err(|e| Error::Shape(format!("{what}: {e}")))?;
    if let Some(&y) = data.labels.iter().find(|&&y| y >= net.n_classes) {
        return Err(Error::InvalidData(format!("{what}: label {y} outside 0..{}", net.n_classes)));
    }
    Ok(())
}

/// Mini-batch Adam on mean cross-entropy plus penalties.
///
/// Stream 1 of `cfg.seed` shuffles the rows each epoch and stream 2 draws
/// dropout masks. With early stopping, the parameters from the epoch with
/// the lowest validation loss are restored.
pub fn train(mut net: Network, train: &NeuralData, valid: Option<&NeuralData>, cfg: &TrainConfig) -> Result<(Network, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidData("empty training set".into()));
    }
    check_labels(&net, train, "training set")?;
    let valid = valid.filter(|v| !v.is_empty());
    if let Some(v) = valid {
        check_labels(&net, v, "validation set")?;
    }
    if cfg.early_stopping.is_some() && valid.is_none() {
        return Err(Error::InvalidConfig("early stopping needs a non-empty validation set".into()));
    }

    let mut shuffle = rng::stream(cfg.seed, 1);
    let mut dropout = rng::stream(cfg.seed, 2);
    let mut adam = AdamState::new(&net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = TrainHistory { epochs: Vec::new(), stopped_epoch: 0, best_epoch: 0 };
    let mut best: Option<(f64, Network)> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_schedule.rate(cfg.optimizer.lr, epoch);
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut hits) = (0.0, 0.0);
        for (batch, rows) in order.chunks(cfg.batch_size).enumerate() {
            let part = train.select(rows);
            let (probs, cache) = net.forward(&part.inputs, Mode::Train, &mut dropout)?;
            let (ce, grad) = cross_entropy(&probs, &part.labels);
            let loss = ce + net.penalty();
            if !loss.is_finite() || cache.first_non_finite.is_some() {
                let layer = cache.first_non_finite.clone().unwrap_or_else(|| "loss".into());
                return Err(Error::NonFinite { epoch: epoch + 1, batch, layer });
            }
            loss_sum += loss * rows.len() as f64;
            hits += accuracy(&probs, &part.labels) * rows.len() as f64;
            let grads = net.backward(&cache, grad, true);
            net.commit_running_stats(&cache);
            adam.step(&mut net, &grads, &cfg.optimizer, lr);
        }
        let (val_loss, val_acc) = match valid {
            Some(v) => evaluate(&net, v)?,
            None => (f64::NAN, f64::NAN),
        };
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train.len() as f64,
            train_acc: hits / train.len() as f64,
            val_loss,
            val_acc,
        });
        history.stopped_epoch = epoch + 1;

        let Some(EarlyStopping { patience }) = cfg.early_stopping else {
            history.best_epoch = epoch + 1;
            continue;
        };
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            history.best_epoch = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= patience {
                break;
            }
        }
    }
    if let Some((_, kept)) = best {
        net = kept;
    }
    Ok((net, history))
}

/// Images and numeric feature vectors keyed by file id. `labels` follow
/// `image_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualInputSet {
    pub image_ids: Vec<String>,
    /// `[n, channels, height, width]`.
    pub images: ArrayD<f64>,
    pub feature_ids: Vec<String>,
    /// `[n, features]`.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl DualInputSet {
    /// Pairs each image with the feature row of the same id. Every id must
    /// appear exactly once in each modality.
    pub fn align(&self) -> Result<NeuralData> {
        let n = self.image_ids.len();
        let misaligned = |m: String| Error::InvalidData(format!("misaligned modalities: {m}"));
        if self.images.ndim() != 4 || self.images.shape()[0] != n || self.labels.len() != n {
            return Err(misaligned(format!(
                "{n} image ids, image tensor {:?}, {} labels",
                self.images.shape(),
                self.labels.len()
            )));
        }
        if self.features.nrows() != self.feature_ids.len() || self.feature_ids.len() != n {
            return Err(misaligned(format!("{n} images but {} feature rows", self.feature_ids.len())));
        }
        let mut by_id = HashMap::with_capacity(n);
        for (row, id) in self.feature_ids.iter().enumerate() {
            if by_id.insert(id.as_str(), row).is_some() {
                return Err(misaligned(format!("feature id {id} appears twice")));
            }
        }
        let rows = self
            .image_ids
            .iter()
            .map(|id| by_id.remove(id.as_str()).ok_or_else(|| misaligned(format!("image {id} has no feature row"))))
            .collect::<Result<Vec<_>>>()?;
        let features = self.features.select(Axis(0), &rows).into_dyn();
        NeuralData::new(vec![self.images.clone(), features], self.labels.clone())
    }
}

/// Trains a two-branch network (image branch first, numeric branch second)
/// on id-aligned modalities.
pub fn train_dual_input(
    net: Network,
    train_set: &DualInputSet,
    valid: Option<&DualInputSet>,
    cfg: &TrainConfig,
) -> Result<(Network, TrainHistory)> {
    if net.branches.len() != 2 {
        return Err(Error::InvalidConfig(format!("dual-input training needs 2 branches, network has {}", net.branches.len())));
    }
    let t = train_set.align()?;
    let v = valid.map(DualInputSet::align).transpose()?;
    train(net, &t, v.as_ref(), cfg)
}
