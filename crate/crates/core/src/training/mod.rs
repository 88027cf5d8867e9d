//! Mini-batch SGD with a linear learning-rate ramp, per-epoch curves and
//! binary checkpoints.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TensorDataset;
use crate::error::{Error, Result};
use crate::models::{Gradients, Mode, ModelGraph};
use crate::tensor::{cross_entropy, softmax, softmax_cross_entropy_backward, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout_ratio: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            epochs: 100,
            batch_size: 32,
            dropout_ratio: 0.5,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "base learning rate must be positive, got {}",
                self.base_lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_ratio) {
            return Err(Error::InvalidConfig(format!(
                "dropout ratio must be in [0, 1), got {}",
                self.dropout_ratio
            )));
        }
        Ok(())
    }
}

/// Learning rate for a 0-based epoch: `base_lr · (1 − epoch / epochs)`.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::EpochOutOfRange {
            epoch,
            epochs: config.epochs,
        });
    }
    Ok(config.base_lr * (1.0 - epoch as f64 / config.epochs as f64))
}

/// Plain gradient step `p ← p − lr·g`. Parameter and gradient maps must
/// hold the same names with the same shapes.
pub fn sgd_step(
    parameters: &mut std::collections::BTreeMap<String, Tensor>,
    gradients: &Gradients,
    lr: f64,
) -> Result<()> {
    if parameters.len() != gradients.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters but {} gradients",
            parameters.len(),
            gradients.len()
        )));
    }
    for (name, g) in gradients {
        let p = parameters
            .get(name)
            .ok_or_else(|| Error::ShapeMismatch(format!("gradient for unknown parameter {name}")))?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!(
                "parameter {name} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    for (name, g) in gradients {
        let p = parameters.get_mut(name).expect("checked above");
        for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_top1: f64,
    pub val_loss: f64,
    pub val_top1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub records: Vec<EpochRecord>,
}

impl TrainingCurve {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_loss,train_top1,val_loss,val_top1";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.lr, r.train_loss, r.train_top1, r.val_loss, r.val_top1
            ));
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn check_labels(data: &TensorDataset, classes: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&label) = data.labels().iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | batch as u64);
    rand::Rng::random(&mut rng)
}

fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks(c)
        .zip(labels)
        .filter(|(row, &l)| crate::evaluation::argmax(row) == l)
        .count()
}

/// Mean loss and top-1 accuracy in inference mode.
pub fn inference_loss(model: &ModelGraph, data: &TensorDataset, batch_size: usize) -> Result<(f64, f64)> {
    check_labels(data, model.num_classes())?;
    let mut loss = 0.0;
    let mut correct = 0;
    for idx in data.batch_indices(batch_size.max(1)) {
        let (x, labels) = data.batch(&idx)?;
        let logits = model.forward(&x, Mode::Inference, 0)?;
        loss += cross_entropy(&softmax(&logits)?, &labels)? * labels.len() as f64;
        correct += count_correct(&logits, &labels);
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

/// Runs one training epoch in place and returns mean loss and top-1 accuracy
/// over the training batches (training-mode logits).
pub fn train_epoch(
    model: &mut ModelGraph,
    data: &TensorDataset,
    config: &TrainConfig,
    epoch: usize,
) -> Result<(f64, f64)> {
    let lr = lr_schedule(epoch, config)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    if config.shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64 + 1);
        order.shuffle(&mut rng);
    }
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for (b, idx) in order.chunks(config.batch_size).enumerate() {
        let (x, labels) = data.batch(idx)?;
        let pass = model.forward_with_cache(&x, Mode::Training, batch_seed(config.seed, epoch, b))?;
        let probs = softmax(&pass.logits)?;
        loss_sum += cross_entropy(&probs, &labels)? * labels.len() as f64;
        correct += count_correct(&pass.logits, &labels);
        let grad = softmax_cross_entropy_backward(&probs, &labels)?;
        let grads = model.backward(&pass, &grad)?;
        sgd_step(model.parameters_mut(), &grads, lr)?;
    }
    Ok((loss_sum / data.len() as f64, correct as f64 / data.len() as f64))
}

pub fn train(
    model: ModelGraph,
    train_split: &TensorDataset,
    val_split: &TensorDataset,
    config: &TrainConfig,
) -> Result<(ModelGraph, TrainingCurve)> {
    train_with_progress(model, train_split, val_split, config, |_| {})
}

/// [`train`], calling `on_epoch` after each epoch's record is appended.
pub fn train_with_progress(
    mut model: ModelGraph,
    train_split: &TensorDataset,
    val_split: &TensorDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelGraph, TrainingCurve)> {
    config.validate()?;
    check_labels(train_split, model.num_classes())?;
    check_labels(val_split, model.num_classes())?;
    let mut curve = TrainingCurve::default();
    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config)?;
        let (train_loss, train_top1) = train_epoch(&mut model, train_split, config, epoch)?;
        let (val_loss, val_top1) = inference_loss(&model, val_split, config.batch_size)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            train_top1,
            val_loss,
            val_top1,
        };
        on_epoch(&record);
        curve.records.push(record);
    }
    Ok((model, curve))
}
