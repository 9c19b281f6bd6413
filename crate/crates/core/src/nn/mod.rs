//! Tensor-level training engine: layers, model graph, losses, optimizers,
//! learning-rate schedule, initialization, checkpoints and gradient checks.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
mod loss;
mod model;
mod optim;
mod param;
mod train;
mod weight;
mod zoo;

pub use loss::{
    bce_with_logits_grad, binary_cross_entropy, cross_entropy, cross_entropy_grad, sigmoid, BCE_EPS,
};
pub use model::{ArchSpec, ButterflySpec, Layer, Model, ModelState};
pub use optim::{adam_step, sgd_momentum_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use param::Parameter;
pub use train::{evaluate_accuracy, lr_at_epoch, predict, train, EpochHook, EpochRecord, TrainConfig};
pub use weight::WeightMatrix;
pub use zoo::{build, build_initialized, init_params};
