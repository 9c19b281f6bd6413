//! Iterative magnitude pruning with best-validation rewinding.
//!
//! One run trains the dense model, then repeats: rewind to the weights of
//! the best validation epoch, remove a fixed fraction of the surviving
//! prunable weights with the smallest magnitude (globally, across all
//! prunable tensors), and retrain the survivors with a fresh schedule and
//! optimizer state while pruned positions stay frozen at zero.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::butterfly::count_model_params;
use crate::data::ImageDataset;
use crate::error::{Error, Result};
use crate::nn::checkpoint::save_checkpoint;
use crate::nn::{evaluate_accuracy, train, EpochRecord, Model, ModelState, TrainConfig};
use crate::seed::derive_seed;

/// Keep-masks of the prunable tensors, by parameter name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneMask {
    pub masks: BTreeMap<String, Vec<bool>>,
}

impl PruneMask {
    /// Masks currently carried by the model's prunable parameters (absent masks read as all-kept).
    pub fn from_model(model: &Model) -> Self {
        let masks = model
            .params()
            .into_iter()
            .filter(|(_, p)| p.prunable)
            .map(|(n, p)| {
                let m = p.mask.clone().unwrap_or_else(|| vec![true; p.len()]);
                (n, m)
            })
            .collect();
        PruneMask { masks }
    }

    pub fn total(&self) -> usize {
        self.masks.values().map(Vec::len).sum()
    }

    pub fn surviving(&self) -> usize {
        self.masks.values().map(|m| m.iter().filter(|&&k| k).count()).sum()
    }

    pub fn surviving_fraction(&self) -> f64 {
        self.surviving() as f64 / self.total().max(1) as f64
    }

    /// True when every position kept by `self` is also kept by `other`.
    pub fn is_subset_of(&self, other: &PruneMask) -> bool {
        self.masks.iter().all(|(name, m)| {
            other.masks.get(name).is_some_and(|o| {
                o.len() == m.len() && m.iter().zip(o).all(|(&a, &b)| !a || b)
            })
        })
    }
}

/// Masks the `⌊fraction · surviving⌋` surviving prunable weights of smallest
/// magnitude, ranking all prunable tensors jointly. Ties in magnitude are
/// broken by parameter name, then flat index (the first in that order is
/// pruned first).
pub fn global_magnitude_prune(model: &mut Model, fraction: f64) -> Result<PruneMask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("prune fraction {fraction} outside (0, 1)")));
    }
    let mut candidates: Vec<(f64, String, usize)> = Vec::new();
    for (name, p) in model.params() {
        if !p.prunable {
            continue;
        }
        for (i, v) in p.value.data().iter().enumerate() {
            if p.is_kept(i) {
                candidates.push((v.abs(), name.clone(), i));
            }
        }
    }
    if candidates.is_empty() {
        return Err(Error::Empty("no surviving prunable weights".into()));
    }
    let k = (fraction * candidates.len() as f64).floor() as usize;
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut removed: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (_, name, i) in candidates.into_iter().take(k) {
        removed.entry(name).or_default().push(i);
    }
    for (name, p) in model.params_mut() {
        if !p.prunable {
            continue;
        }
        let len = p.len();
        let mask = p.mask.get_or_insert_with(|| vec![true; len]);
        if let Some(idx) = removed.get(&name) {
            for &i in idx {
                mask[i] = false;
            }
        }
        p.apply_mask();
    }
    Ok(PruneMask::from_model(model))
}

/// Parameter and buffer values at the end of one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub val_accuracy: Option<f64>,
    pub state: ModelState,
}

impl Snapshot {
    pub fn capture(model: &Model, epoch: usize, val_accuracy: Option<f64>) -> Self {
        Snapshot {
            epoch,
            val_accuracy,
            state: model.state(),
        }
    }
}

fn improves(candidate: Option<f64>, best: Option<f64>) -> bool {
    match (candidate, best) {
        (Some(c), Some(b)) => c > b,
        // without validation data the latest epoch wins
        _ => true,
    }
}

/// The snapshot with the highest validation accuracy, earliest on ties.
pub fn record_best_snapshot(history: &[Snapshot]) -> Result<Snapshot> {
    let mut best: Option<&Snapshot> = None;
    for s in history {
        if best.is_none_or(|b| improves(s.val_accuracy, b.val_accuracy)) {
            best = Some(s);
        }
    }
    best.cloned()
        .ok_or_else(|| Error::Empty("no epochs recorded".into()))
}

/// Restores the snapshot values bit-exactly, then re-applies the current masks.
pub fn rewind(model: &mut Model, snapshot: &Snapshot) -> Result<()> {
    model.load_state(&snapshot.state)?;
    model.apply_masks();
    Ok(())
}

/// Trains, tracking the best-validation epoch, and rewinds to it.
///
/// Only the running best is kept in memory. With zero epochs the model is
/// unchanged and the returned snapshot is its current state.
pub fn train_to_best(
    model: &mut Model,
    train_set: &ImageDataset,
    val_set: Option<&ImageDataset>,
    config: &TrainConfig,
) -> Result<(Vec<EpochRecord>, Snapshot)> {
    let mut best: Option<Snapshot> = None;
    let mut hook = |rec: &EpochRecord, m: &Model| {
        if best
            .as_ref()
            .is_none_or(|b| improves(rec.val_accuracy, b.val_accuracy))
        {
            best = Some(Snapshot::capture(m, rec.epoch, rec.val_accuracy));
        }
    };
    let history = train(model, train_set, val_set, config, &mut hook)?;
    let best = match best {
        Some(b) => {
            rewind(model, &b)?;
            b
        }
        None => Snapshot::capture(model, 0, None),
    };
    Ok((history, best))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpConfig {
    /// Number of prune-and-retrain rounds after the dense training.
    pub rounds: usize,
    /// Fraction of the surviving prunable weights removed per round.
    pub prune_fraction: f64,
    pub train: TrainConfig,
}

impl ImpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::Config(format!(
                "prune fraction {} outside (0, 1)",
                self.prune_fraction
            )));
        }
        self.train.validate()
    }
}

/// Outcome of one sparsity level; round 0 is the dense model.
#[derive(Clone, Debug)]
pub struct ImpRound {
    pub round: usize,
    /// Surviving fraction of the prunable weights.
    pub surviving_fraction: f64,
    /// Nonzero percentage over all parameters (biases and batch norm included).
    pub nonzero_pct: f64,
    pub best_epoch: usize,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub mask: PruneMask,
    /// Weights of the best validation epoch at this sparsity level.
    pub model: Model,
}

/// Runs dense training followed by `rounds` prune/retrain cycles. Each
/// training uses the inner config with a seed derived from its round index.
pub fn imp_run(
    model: &mut Model,
    train_set: &ImageDataset,
    val_set: Option<&ImageDataset>,
    test_set: Option<&ImageDataset>,
    config: &ImpConfig,
) -> Result<Vec<ImpRound>> {
    config.validate()?;
    let mut rounds = Vec::with_capacity(config.rounds + 1);
    for round in 0..=config.rounds {
        if round > 0 {
            global_magnitude_prune(model, config.prune_fraction)?;
        }
        let mut tc = config.train.clone();
        tc.seed = derive_seed(config.train.seed, &[round as u64]);
        let (_, best) = train_to_best(model, train_set, val_set, &tc)?;
        let mask = PruneMask::from_model(model);
        let test_accuracy = test_set.map(|t| evaluate_accuracy(model, t)).transpose()?;
        rounds.push(ImpRound {
            round,
            surviving_fraction: mask.surviving_fraction(),
            nonzero_pct: count_model_params(model).percentage()?,
            best_epoch: best.epoch,
            val_accuracy: best.val_accuracy,
            test_accuracy,
            mask,
            model: model.clone(),
        });
    }
    Ok(rounds)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub round: usize,
    pub surviving_fraction: f64,
    pub nonzero_pct: f64,
    pub best_epoch: usize,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub file: String,
}

/// Writes `round_KK_nonzero_PP.PP.ckpt` per round plus `manifest.json`.
pub fn write_round_checkpoints(rounds: &[ImpRound], dir: &Path) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Vec::with_capacity(rounds.len());
    for r in rounds {
        let file = format!("round_{:02}_nonzero_{:.2}.ckpt", r.round, r.nonzero_pct);
        let mut meta = BTreeMap::new();
        meta.insert("round".to_string(), r.round.to_string());
        meta.insert("nonzero_pct".to_string(), format!("{}", r.nonzero_pct));
        save_checkpoint(&dir.join(&file), &r.model, r.best_epoch as u64, None, meta)?;
        manifest.push(ManifestEntry {
            round: r.round,
            surviving_fraction: r.surviving_fraction,
            nonzero_pct: r.nonzero_pct,
            best_epoch: r.best_epoch,
            val_accuracy: r.val_accuracy,
            test_accuracy: r.test_accuracy,
            file,
        });
    }
    let path: PathBuf = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
