use serde::{Deserialize, Serialize};

use super::discriminator::{attack_accuracy, train_discriminators, DiscriminatorSpec};
use super::features::{build_attack_dataset, FeatureConfig};
use super::partition::DataPartition;
use super::discriminator::paper_grid;
use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default = "paper_grid")]
    pub grid: Vec<DiscriminatorSpec>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            features: FeatureConfig::default(),
            grid: paper_grid(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAccuracy {
    pub spec: DiscriminatorSpec,
    /// Accuracy on the shadow attack set the discriminator was fitted on.
    pub shadow_accuracy: f64,
    /// Attack accuracy A on the target attack set.
    pub target_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub grid: Vec<GridAccuracy>,
    /// Maximum target accuracy over the grid.
    pub attack_accuracy: f64,
    /// `200 − 2A` for the strongest attack.
    pub defense: f64,
    /// Set when the strongest attack is below chance, so the defense exceeds 100.
    pub defense_above_100: bool,
    pub target_examples: usize,
    pub shadow_examples: usize,
}

/// `D = 200 − 2A`; 100 means chance-level attack, 0 a perfect one.
pub fn defense_score(attack_accuracy: f64) -> f64 {
    200.0 - 2.0 * attack_accuracy
}

/// Members are the fitted training points; non-members are the first
/// held-out points (sorted order) up to the member count.
fn balanced(members: Vec<usize>, held_out: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = members.len().min(held_out.len());
    if n == 0 {
        return Err(Error::Empty("attack split".into()));
    }
    Ok((members[..n].to_vec(), held_out[..n].to_vec()))
}

/// Fits the discriminator grid on the shadow model's attack set and scores
/// every discriminator on the target's; the strongest sets the defense.
pub fn evaluate_attack(
    target: &Model,
    shadow: &Model,
    data: &ImageDataset,
    partition: &DataPartition,
    config: &AttackConfig,
    seed: u64,
) -> Result<AttackResult> {
    let (sm, sn) = balanced(partition.fit_shadow(), &partition.test_shadow)?;
    let (tm, tn) = balanced(partition.fit_target(), &partition.test_target)?;
    let shadow_set = build_attack_dataset(shadow, data, &sm, &sn, &config.features, derive_seed(seed, &[0]))?;
    let target_set = build_attack_dataset(target, data, &tm, &tn, &config.features, derive_seed(seed, &[1]))?;
    let discs = train_discriminators(&shadow_set, &config.grid, derive_seed(seed, &[2]))?;
    let mut grid = Vec::with_capacity(discs.len());
    for d in &discs {
        grid.push(GridAccuracy {
            spec: d.spec.clone(),
            shadow_accuracy: attack_accuracy(d, &shadow_set)?,
            target_accuracy: attack_accuracy(d, &target_set)?,
        });
    }
    let a = grid
        .iter()
        .map(|g| g.target_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let defense = defense_score(a);
    Ok(AttackResult {
        grid,
        attack_accuracy: a,
        defense,
        defense_above_100: defense > 100.0,
        target_examples: target_set.len(),
        shadow_examples: shadow_set.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defense_identity() {
        assert_eq!(defense_score(50.0), 100.0);
        assert_eq!(defense_score(75.0), 50.0);
        assert_eq!(defense_score(100.0), 0.0);
        assert_eq!(defense_score(56.25), 87.5);
    }
}
