use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pipeline::TrialResult;
use crate::error::{Error, Result};

/// Mean and sample standard deviation (`n − 1`; zero for a single value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> Result<Stat> {
    if xs.is_empty() {
        return Err(Error::Empty("statistics of no values".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(Stat { mean, std })
}

/// True when `[mean ± std]` intervals do not overlap.
pub fn intervals_disjoint(a: Stat, b: Stat) -> bool {
    a.mean - a.std > b.mean + b.std || a.mean + a.std < b.mean - b.std
}

/// Relative defense gain over relative accuracy loss:
/// `(|def − def_dense| / def_dense) · (acc_dense / |acc − acc_dense|)`.
pub fn tradeoff_ratio(acc: f64, def: f64, acc_dense: f64, def_dense: f64) -> Result<f64> {
    let dacc = (acc - acc_dense).abs();
    if dacc == 0.0 {
        return Err(Error::Undefined("trade-off ratio with no accuracy change".into()));
    }
    if def_dense.is_nan() || def_dense <= 0.0 {
        return Err(Error::Undefined(format!("trade-off ratio with dense defense {def_dense}")));
    }
    Ok(((def - def_dense).abs() * acc_dense) / (def_dense * dacc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: String,
    pub trials: usize,
    pub nonzero_pct: Stat,
    pub test_accuracy: Stat,
    pub attack_accuracy: Stat,
    pub defense: Stat,
    /// Fewer than two trials: the std is zero by convention.
    pub underpowered: bool,
    /// Defense interval disjoint from the dense baseline's.
    pub defense_significant: Option<bool>,
    /// Accuracy interval disjoint from the dense baseline's.
    pub accuracy_significant: Option<bool>,
    /// Against the dense baseline; absent when undefined.
    pub tradeoff_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub master_seed: u64,
    /// Level used as the dense reference (`dense`, else `imp-r0`).
    pub baseline: Option<String>,
    pub levels: Vec<LevelSummary>,
    pub trials: Vec<TrialResult>,
}

/// Groups records by level (in order of first appearance) and summarizes them.
pub fn aggregate(name: &str, master_seed: u64, trials: Vec<TrialResult>) -> Result<Report> {
    if trials.is_empty() {
        return Err(Error::Empty("no trial results to aggregate".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    for t in &trials {
        if !order.contains(&t.level.as_str()) {
            order.push(&t.level);
        }
    }
    let mut levels = Vec::with_capacity(order.len());
    for level in &order {
        let rs: Vec<&TrialResult> = trials.iter().filter(|t| t.level == *level).collect();
        let col = |f: fn(&TrialResult) -> f64| mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        levels.push(LevelSummary {
            level: level.to_string(),
            trials: rs.len(),
            nonzero_pct: col(|r| r.nonzero_pct)?,
            test_accuracy: col(|r| r.target_test_accuracy)?,
            attack_accuracy: col(|r| r.attack.attack_accuracy)?,
            defense: col(|r| r.attack.defense)?,
            underpowered: rs.len() < 2,
            defense_significant: None,
            accuracy_significant: None,
            tradeoff_ratio: None,
        });
    }
    let baseline = ["dense", "imp-r0"]
        .into_iter()
        .find(|b| order.contains(b))
        .map(String::from);
    if let Some(b) = &baseline {
        let base = levels.iter().find(|l| &l.level == b).cloned().expect("baseline level");
        for l in levels.iter_mut().filter(|l| &l.level != b) {
            l.defense_significant = Some(intervals_disjoint(l.defense, base.defense));
            l.accuracy_significant = Some(intervals_disjoint(l.test_accuracy, base.test_accuracy));
            l.tradeoff_ratio = tradeoff_ratio(
                l.test_accuracy.mean,
                l.defense.mean,
                base.test_accuracy.mean,
                base.defense.mean,
            )
            .ok();
        }
    }
    Ok(Report {
        name: name.to_string(),
        master_seed,
        baseline,
        levels,
        trials,
    })
}

impl Report {
    /// Plot-ready table: one row per level.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "level,nonzero_pct,mean_accuracy,std_accuracy,mean_defense,std_defense,mean_attack_accuracy,trials\n",
        );
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                l.level,
                l.nonzero_pct.mean,
                l.test_accuracy.mean,
                l.test_accuracy.std,
                l.defense.mean,
                l.defense.std,
                l.attack_accuracy.mean,
                l.trials
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Writes `report.json` (everything, including raw trials) and `report.csv`
/// into `dir`, creating it if needed.
pub fn emit_report(report: &Report, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if report.trials.is_empty() || report.levels.is_empty() {
        return Err(Error::Empty("refusing to write a report without trials".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    let csv = dir.join("report.csv");
    std::fs::write(&json, report.to_json()?).map_err(|e| Error::io(&json, e))?;
    std::fs::write(&csv, report.to_csv()).map_err(|e| Error::io(&csv, e))?;
    Ok((json, csv))
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}
