//! Heavy-ball SGD and Adam over a model's parameters.
//!
//! Weight decay is coupled: `wd · w` is added to the gradient before the
//! update, and only for parameters flagged `decay`. Masked positions are
//! re-zeroed after every step.

use crate::error::{Error, Result};
use crate::nn::{Model, Parameter};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter optimizer buffers, in [`Model::params`] order.
#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState {
    Sgd {
        velocity: Vec<Vec<f64>>,
    },
    Adam {
        first: Vec<Vec<f64>>,
        second: Vec<Vec<f64>>,
        step: u64,
    },
}

impl OptimizerState {
    pub fn sgd(model: &Model) -> Self {
        OptimizerState::Sgd {
            velocity: zeros_like(model),
        }
    }

    pub fn adam(model: &Model) -> Self {
        OptimizerState::Adam {
            first: zeros_like(model),
            second: zeros_like(model),
            step: 0,
        }
    }
}

fn zeros_like(model: &Model) -> Vec<Vec<f64>> {
    model.params().iter().map(|(_, p)| vec![0.0; p.len()]).collect()
}

fn check_buffers(params: &[(String, &mut Parameter)], bufs: &[Vec<f64>]) -> Result<()> {
    if params.len() != bufs.len() {
        return Err(Error::shape("optimizer state", params.len(), bufs.len()));
    }
    for ((name, p), b) in params.iter().zip(bufs) {
        if p.len() != b.len() {
            return Err(Error::shape(format!("optimizer buffer for {name}"), p.len(), b.len()));
        }
    }
    Ok(())
}

/// `v ← μ v + (g + λ w)`, `w ← w − lr · v` (no Nesterov, no dampening).
pub fn sgd_momentum_step(
    model: &mut Model,
    state: &mut OptimizerState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let OptimizerState::Sgd { velocity } = state else {
        return Err(Error::Usage("SGD step with non-SGD optimizer state".into()));
    };
    let mut params = model.params_mut();
    check_buffers(&params, velocity)?;
    for ((_, p), v) in params.iter_mut().zip(velocity.iter_mut()) {
        let wd = if p.decay { weight_decay } else { 0.0 };
        let grad = p.grad.as_ref().map(|g| g.data().to_vec());
        let w = p.value.data_mut();
        for i in 0..w.len() {
            let g = grad.as_ref().map_or(0.0, |g| g[i]) + wd * w[i];
            v[i] = momentum * v[i] + g;
            w[i] -= lr * v[i];
        }
        p.apply_mask();
    }
    Ok(())
}

/// Bias-corrected Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-8 and no weight decay.
pub fn adam_step(model: &mut Model, state: &mut OptimizerState, lr: f64) -> Result<()> {
    let OptimizerState::Adam { first, second, step } = state else {
        return Err(Error::Usage("Adam step with non-Adam optimizer state".into()));
    };
    let mut params = model.params_mut();
    check_buffers(&params, first)?;
    check_buffers(&params, second)?;
    *step += 1;
    let t = *step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (((_, p), m), v) in params.iter_mut().zip(first.iter_mut()).zip(second.iter_mut()) {
        let Some(grad) = p.grad.as_ref().map(|g| g.data().to_vec()) else {
            continue;
        };
        let w = p.value.data_mut();
        for i in 0..w.len() {
            let g = grad[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            w[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
        p.apply_mask();
    }
    Ok(())
}
