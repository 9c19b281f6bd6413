use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig, SparsitySpec};
use super::report::{aggregate, Report};
use crate::butterfly::{count_model_params, substitute_butterfly};
use crate::data::{gen_synthetic, load_cifar10, ImageDataset};
use crate::error::Result;
use crate::imp::{imp_run, train_to_best, ImpConfig};
use crate::mia::{evaluate_attack, partition_dataset, AttackResult};
use crate::nn::{build_initialized, evaluate_accuracy, ArchSpec, Model, TrainConfig};
use crate::seed::{derive_seed, role};

/// Outcome of one sparsity level in one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub level: String,
    pub nonzero_pct: f64,
    pub target_train_accuracy: f64,
    pub target_test_accuracy: f64,
    pub shadow_test_accuracy: f64,
    pub attack: AttackResult,
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<ImageDataset> {
    match &config.dataset {
        DatasetSpec::Cifar10 { dir } => load_cifar10(dir),
        synthetic => gen_synthetic(
            &synthetic.synthetic_spec().expect("synthetic dataset"),
            derive_seed(config.seed, &[role::DATA]),
        ),
    }
}

/// A trained network at one sparsity level.
#[derive(Clone, Debug)]
pub struct TrainedVariant {
    pub level: String,
    pub nonzero_pct: f64,
    pub model: Model,
}

/// Builds, sparsifies and trains one network. Every training ends at the
/// weights of the best validation epoch (the last epoch without validation data).
pub fn train_variant(
    arch: &ArchSpec,
    sparsity: &SparsitySpec,
    fit: &ImageDataset,
    val: Option<&ImageDataset>,
    train: &TrainConfig,
    init_seed: u64,
) -> Result<Vec<TrainedVariant>> {
    let mut model = build_initialized(arch, init_seed)?;
    let finish = |level: String, model: Model| -> Result<TrainedVariant> {
        Ok(TrainedVariant {
            level,
            nonzero_pct: count_model_params(&model).percentage()?,
            model,
        })
    };
    match sparsity {
        SparsitySpec::None => {
            train_to_best(&mut model, fit, val, train)?;
            Ok(vec![finish("dense".into(), model)?])
        }
        SparsitySpec::Butterfly { segments, factors } => {
            substitute_butterfly(&mut model, *segments, *factors, derive_seed(init_seed, &[role::BUTTERFLY]))?;
            train_to_best(&mut model, fit, val, train)?;
            Ok(vec![finish(format!("butterfly-s{segments}-l{factors}"), model)?])
        }
        SparsitySpec::Imp { rounds, prune_fraction } => {
            let cfg = ImpConfig {
                rounds: *rounds,
                prune_fraction: *prune_fraction,
                train: train.clone(),
            };
            imp_run(&mut model, fit, val, None, &cfg)?
                .into_iter()
                .map(|r| finish(format!("imp-r{}", r.round), r.model))
                .collect()
        }
    }
}

/// One trial: partition, train target and shadow identically (apart from
/// data and seeds) for every sparsity variant, attack each level.
pub fn run_pipeline(config: &ExperimentConfig, data: &ImageDataset, trial: usize) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let seed = derive_seed(config.seed, &[trial as u64]);
    let p = partition_dataset(
        data.len(),
        config.partition.size,
        config.partition.val_size,
        derive_seed(seed, &[role::PARTITION]),
    )?;
    let fit_t = data.subset(&p.fit_target())?;
    let fit_s = data.subset(&p.fit_shadow())?;
    let val_t = (!p.val_target.is_empty()).then(|| data.subset(&p.val_target)).transpose()?;
    let val_s = (!p.val_shadow.is_empty()).then(|| data.subset(&p.val_shadow)).transpose()?;
    let test_t = data.subset(&p.test_target)?;
    let test_s = data.subset(&p.test_shadow)?;
    let mut out = Vec::new();
    for (v, variant) in config.sparsity.iter().enumerate() {
        let sparsity = &variant.method;
        let v = v as u64;
        let base = variant.train_config(&config.train);
        let train_cfg = |r: u64| TrainConfig {
            seed: derive_seed(seed, &[r, v]),
            ..base.clone()
        };
        let targets = train_variant(
            &config.arch,
            sparsity,
            &fit_t,
            val_t.as_ref(),
            &train_cfg(role::TARGET_TRAIN),
            derive_seed(seed, &[role::TARGET_INIT]),
        )?;
        let shadows = train_variant(
            &config.arch,
            sparsity,
            &fit_s,
            val_s.as_ref(),
            &train_cfg(role::SHADOW_TRAIN),
            derive_seed(seed, &[role::SHADOW_INIT]),
        )?;
        for (l, (t, s)) in targets.iter().zip(&shadows).enumerate() {
            let attack = evaluate_attack(
                &t.model,
                &s.model,
                data,
                &p,
                &config.attack,
                derive_seed(seed, &[role::FEATURES, v, l as u64]),
            )?;
            out.push(TrialResult {
                trial,
                seed,
                level: t.level.clone(),
                nonzero_pct: t.nonzero_pct,
                target_train_accuracy: evaluate_accuracy(&t.model, &fit_t)?,
                target_test_accuracy: evaluate_accuracy(&t.model, &test_t)?,
                shadow_test_accuracy: evaluate_accuracy(&s.model, &test_s)?,
                attack,
            });
        }
    }
    Ok(out)
}

/// Runs all trials (concurrently) and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let data = load_dataset(config)?;
    let per_trial: Vec<Vec<TrialResult>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_pipeline(config, &data, t))
        .collect::<Result<_>>()?;
    aggregate(&config.name, config.seed, per_trial.into_iter().flatten().collect())
}
