use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::AttackSet;
use crate::error::{Error, Result};
use crate::nn::{adam_step, bce_with_logits_grad, build_initialized, sigmoid, ArchSpec, Model, OptimizerState};
use crate::seed::derive_seed;
use crate::Tensor;

/// A fully connected perceptron with ReLU hidden layers and a sigmoid output,
/// trained by Adam on binary cross entropy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

/// Depths 1, 2, 3 with widths 30, 30, 100, crossed with learning rates 1e-2, 1e-3, 1e-4.
pub fn paper_grid() -> Vec<DiscriminatorSpec> {
    let mut grid = Vec::with_capacity(9);
    for (hidden_layers, hidden_width) in [(1, 30), (2, 30), (3, 100)] {
        for learning_rate in [1e-2, 1e-3, 1e-4] {
            grid.push(DiscriminatorSpec {
                hidden_layers,
                hidden_width,
                learning_rate,
                epochs: 80,
                batch_size: 256,
            });
        }
    }
    grid
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub model: Model,
}

impl Discriminator {
    /// Membership probabilities for an `n × 3C` feature matrix.
    pub fn predict_proba(&self, features: &Tensor) -> Result<Vec<f64>> {
        Ok(self.model.forward(features)?.data().iter().map(|&z| sigmoid(z)).collect())
    }
}

pub fn train_discriminator(set: &AttackSet, spec: &DiscriminatorSpec, seed: u64) -> Result<Discriminator> {
    if set.is_empty() {
        return Err(Error::Empty("attack training set".into()));
    }
    if spec.hidden_layers == 0 || spec.hidden_width == 0 || spec.batch_size == 0 {
        return Err(Error::Config(format!("invalid discriminator spec {spec:?}")));
    }
    let width = set.feature_width();
    let arch = ArchSpec::Mlp {
        input_shape: vec![width],
        hidden: vec![spec.hidden_width; spec.hidden_layers],
        classes: 1,
    };
    let mut model = build_initialized(&arch, derive_seed(seed, &[0]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let features = set.feature_matrix();
    let targets: Vec<f64> = set.examples.iter().map(|e| f64::from(u8::from(e.member))).collect();
    let mut state = OptimizerState::adam(&model);
    let mut order: Vec<usize> = (0..set.len()).collect();
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(spec.batch_size) {
            let mut x = Vec::with_capacity(chunk.len() * width);
            for &i in chunk {
                x.extend_from_slice(features.row(i));
            }
            let x = Tensor::from_vec(&[chunk.len(), width], x)?;
            let y: Vec<f64> = chunk.iter().map(|&i| targets[i]).collect();
            model.zero_grad();
            let logits = model.forward_train(&x)?;
            let (_, grad) = bce_with_logits_grad(&logits, &y)?;
            model.backward(&grad)?;
            adam_step(&mut model, &mut state, spec.learning_rate)?;
        }
    }
    Ok(Discriminator { spec: spec.clone(), model })
}

/// Trains every spec of the grid; spec `k` uses `derive_seed(seed, [k])`.
pub fn train_discriminators(set: &AttackSet, grid: &[DiscriminatorSpec], seed: u64) -> Result<Vec<Discriminator>> {
    if grid.is_empty() {
        return Err(Error::Config("empty discriminator grid".into()));
    }
    grid.par_iter()
        .enumerate()
        .map(|(k, spec)| train_discriminator(set, spec, derive_seed(seed, &[k as u64])))
        .collect()
}

/// Percentage of correct membership calls at threshold 0.5 (`p > 0.5` means member).
pub fn membership_accuracy(probs: &[f64], members: &[bool]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Empty("attack evaluation set".into()));
    }
    if probs.len() != members.len() {
        return Err(Error::shape("attack evaluation", members.len(), probs.len()));
    }
    let correct = probs.iter().zip(members).filter(|(&p, &m)| (p > 0.5) == m).count();
    Ok(100.0 * correct as f64 / members.len() as f64)
}

pub fn attack_accuracy(disc: &Discriminator, set: &AttackSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("attack evaluation set".into()));
    }
    membership_accuracy(&disc.predict_proba(&set.feature_matrix())?, &set.members())
}
