//! Sparse neural networks and their exposure to membership inference.
//!
//! The crate trains small classifiers under two sparsity mechanisms,
//! iterative magnitude pruning ([`imp`]) and butterfly-factorized weight
//! matrices ([`butterfly`]), and measures how well a shadow-model
//! discriminator ([`mia`]) can tell training members from non-members.
//! [`experiment`] wires everything into repeatable multi-trial runs with
//! aggregated reports.

pub mod butterfly;
pub mod data;
mod error;
pub mod experiment;
pub mod imp;
pub mod mia;
pub mod nn;
pub mod seed;
mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
