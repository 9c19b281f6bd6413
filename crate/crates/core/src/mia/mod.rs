//! Shadow-model membership inference.
//!
//! An attacker trains a shadow model the same way as the target, labels
//! the shadow's own training points as members and held-out points as
//! non-members, and fits discriminators on per-point features (class,
//! prediction, local output sensitivity). The strongest discriminator is
//! then scored on the target model's points.

mod attack;
mod discriminator;
mod features;
mod partition;

pub use attack::{defense_score, evaluate_attack, AttackConfig, AttackResult, GridAccuracy};
pub use discriminator::{
    attack_accuracy, membership_accuracy, paper_grid, train_discriminator, train_discriminators,
    Discriminator, DiscriminatorSpec,
};
pub use features::{
    build_attack_dataset, extract_features, AttackExample, AttackSet, FeatureConfig, OutputMode,
};
pub use partition::{partition_dataset, DataPartition};
