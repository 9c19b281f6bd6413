use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::cross_entropy_grad;
use super::optim::{sgd_momentum_step, OptimizerState};
use crate::data::{augment_batch, AugmentConfig, ImageDataset};
use crate::error::{Error, Result};
use crate::nn::Model;

const EVAL_BATCH: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Epochs (0-based) from which the learning rate is multiplied by `lr_drop_factor`.
    pub lr_drop_epochs: Vec<usize>,
    pub lr_drop_factor: f64,
    pub seed: u64,
    #[serde(default)]
    pub augment: AugmentConfig,
}

impl TrainConfig {
    /// 300 epochs, batch 256, momentum 0.9, learning rate divided by 10 at
    /// epochs 150 and 225, flips and crops enabled.
    pub fn paper(initial_lr: f64, weight_decay: f64, seed: u64) -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 256,
            initial_lr,
            momentum: 0.9,
            weight_decay,
            lr_drop_epochs: vec![150, 225],
            lr_drop_factor: 0.1,
            seed,
            augment: AugmentConfig::standard(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.initial_lr.is_nan() || self.initial_lr <= 0.0 {
            return bad(format!("initial learning rate {} must be positive", self.initial_lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad(format!("weight decay {} must be >= 0", self.weight_decay));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor <= 1.0) {
            return bad(format!("lr drop factor {} outside (0, 1]", self.lr_drop_factor));
        }
        if self.lr_drop_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("lr drop epochs {:?} not strictly increasing", self.lr_drop_epochs));
        }
        if let Some(&last) = self.lr_drop_epochs.last() {
            if self.epochs > 0 && last >= self.epochs {
                return bad(format!("lr drop epoch {last} >= epochs {}", self.epochs));
            }
        }
        self.augment.validate()
    }
}

/// Piecewise-constant learning rate: `initial_lr · factor^k` where `k` is
/// the number of drop epochs `<= epoch`.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    let drops = config.lr_drop_epochs.iter().filter(|&&e| e <= epoch).count();
    config.initial_lr * config.lr_drop_factor.powi(drops as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Accuracy on the (augmented) training batches seen during the epoch.
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

/// Hook invoked at the end of every epoch with the epoch record and the model.
pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &Model) + 'a;

/// Mini-batch SGD with momentum on the cross-entropy loss.
///
/// Samples are reshuffled every epoch from a generator seeded by
/// `config.seed`; a fresh optimizer state is used. Masks are respected
/// throughout. Deterministic for a given config, data and initial model.
pub fn train(
    model: &mut Model,
    train_set: &ImageDataset,
    val_set: Option<&ImageDataset>,
    config: &TrainConfig,
    hook: &mut EpochHook<'_>,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if let Some(v) = val_set {
        if v.is_empty() {
            return Err(Error::Config("empty validation set".into()));
        }
    }
    if train_set.sample_shape() != model.input_shape() {
        return Err(Error::shape("training data", model.input_shape(), train_set.sample_shape()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = OptimizerState::sgd(model);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(config, epoch);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let (x, labels) = train_set.batch(chunk);
            let x = augment_batch(&x, &config.augment, &mut rng);
            model.zero_grad();
            let logits = model.forward_train(&x)?;
            let (loss, grad) = cross_entropy_grad(&logits, &labels)?;
            loss_sum += loss * chunk.len() as f64;
            correct += logits
                .argmax_rows()
                .iter()
                .zip(&labels)
                .filter(|(p, y)| p == y)
                .count();
            model.backward(&grad)?;
            sgd_momentum_step(model, &mut state, lr, config.momentum, config.weight_decay)?;
        }
        let val_accuracy = val_set.map(|v| evaluate_accuracy(model, v)).transpose()?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: 100.0 * correct as f64 / train_set.len() as f64,
            val_accuracy,
        };
        hook(&record, model);
        history.push(record);
    }
    Ok(history)
}

/// Predicted class (argmax of the logits, lowest index on ties) per sample.
pub fn predict(model: &Model, data: &ImageDataset) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, _) = data.batch(chunk);
        out.extend(model.forward(&x)?.argmax_rows());
    }
    Ok(out)
}

/// Top-1 accuracy in percent.
pub fn evaluate_accuracy(model: &Model, data: &ImageDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("accuracy of an empty dataset".into()));
    }
    let preds = predict(model, data)?;
    let correct = preds.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
    Ok(100.0 * correct as f64 / data.len() as f64)
}
