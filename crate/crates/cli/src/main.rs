//! Command-line driver for training, pruning, butterfly substitution,
//! membership attacks and full experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sparse_mia::butterfly::{count_model_params, substitute_butterfly};
use sparse_mia::experiment::{emit_report, load_dataset, read_report, run_experiment, ExperimentConfig, Report};
use sparse_mia::imp::{imp_run, train_to_best, write_round_checkpoints, ImpConfig};
use sparse_mia::mia::{build_attack_dataset, evaluate_attack, partition_dataset, DataPartition};
use sparse_mia::nn::checkpoint::{load_checkpoint, save_checkpoint};
use sparse_mia::nn::{build_initialized, evaluate_accuracy, ArchSpec, Model};
use sparse_mia::seed::{derive_seed, role};

#[derive(Parser, Debug)]
#[command(name = "sparse-mia", version, about = "Sparsity versus membership inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a dense target network and save a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Train the shadow network of the partition instead of the target.
        #[arg(long)]
        shadow: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Iterative magnitude pruning; writes one checkpoint per round and a manifest.
    Imp {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        shadow: bool,
        #[arg(long, default_value_t = 5)]
        rounds: usize,
        #[arg(long, default_value_t = 0.2)]
        prune_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Substitute butterfly factorizations in the last segments and train.
    ButterflyTrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        shadow: bool,
        #[arg(long)]
        segments: usize,
        #[arg(long)]
        factors: usize,
        /// Only print the nonzero parameter percentage of the substituted network.
        #[arg(long)]
        count_only: bool,
        #[arg(long, required_unless_present = "count_only")]
        out: Option<PathBuf>,
    },
    /// Attack a target checkpoint using a shadow checkpoint.
    Attack {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        shadow: PathBuf,
        /// Directory for attack.json and the attack sets as TSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all trials of an experiment and write report.json and report.csv.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, required_unless_present = "print_config")]
        out: Option<PathBuf>,
        /// Print the resolved configuration as TOML and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Summarize a report.json as a table (or re-emit it as CSV).
    Report {
        input: PathBuf,
        #[arg(long)]
        csv: bool,
    },
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Experiment configuration (TOML). Overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "desk-scale")]
    preset: String,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Initial learning rate for the network being trained.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Trial index selecting the data partition and seeds.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(&self.preset)?,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
            cfg.train.lr_drop_epochs.retain(|&d| d < e);
        }
        if let Some(lr) = self.lr {
            cfg.train.initial_lr = lr;
        }
        if let Some(wd) = self.weight_decay {
            cfg.train.weight_decay = wd;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Data, partition and seeds for one side (target or shadow) of a trial.
struct Side {
    cfg: ExperimentConfig,
    data: sparse_mia::data::ImageDataset,
    partition: DataPartition,
    trial_seed: u64,
    shadow: bool,
}

impl Side {
    fn new(args: &ConfigArgs, shadow: bool) -> Result<Self> {
        let cfg = args.resolve()?;
        let data = load_dataset(&cfg)?;
        let trial_seed = derive_seed(cfg.seed, &[args.trial as u64]);
        let partition = partition_dataset(
            data.len(),
            cfg.partition.size,
            cfg.partition.val_size,
            derive_seed(trial_seed, &[role::PARTITION]),
        )?;
        Ok(Side {
            cfg,
            data,
            partition,
            trial_seed,
            shadow,
        })
    }

    fn fit(&self) -> Result<sparse_mia::data::ImageDataset> {
        let idx = if self.shadow { self.partition.fit_shadow() } else { self.partition.fit_target() };
        Ok(self.data.subset(&idx)?)
    }

    fn val(&self) -> Result<Option<sparse_mia::data::ImageDataset>> {
        let idx = if self.shadow { &self.partition.val_shadow } else { &self.partition.val_target };
        Ok((!idx.is_empty()).then(|| self.data.subset(idx)).transpose()?)
    }

    fn test(&self) -> Result<sparse_mia::data::ImageDataset> {
        let idx = if self.shadow { &self.partition.test_shadow } else { &self.partition.test_target };
        Ok(self.data.subset(idx)?)
    }

    fn init(&self) -> Result<Model> {
        let r = if self.shadow { role::SHADOW_INIT } else { role::TARGET_INIT };
        Ok(build_initialized(&self.cfg.arch, derive_seed(self.trial_seed, &[r]))?)
    }

    fn train_config(&self) -> sparse_mia::nn::TrainConfig {
        let r = if self.shadow { role::SHADOW_TRAIN } else { role::TARGET_TRAIN };
        sparse_mia::nn::TrainConfig {
            seed: derive_seed(self.trial_seed, &[r, 0]),
            ..self.cfg.train.clone()
        }
    }
}

fn meta(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn train_and_save(side: &Side, mut model: Model, out: &Path, extra: &[(&str, String)]) -> Result<()> {
    let fit = side.fit()?;
    let (_, best) = train_to_best(&mut model, &fit, side.val()?.as_ref(), &side.train_config())?;
    let train_acc = evaluate_accuracy(&model, &fit)?;
    let test_acc = evaluate_accuracy(&model, &side.test()?)?;
    let pct = count_model_params(&model).percentage()?;
    let mut m = meta(&[
        ("train_accuracy", train_acc.to_string()),
        ("test_accuracy", test_acc.to_string()),
        ("nonzero_pct", pct.to_string()),
    ]);
    m.extend(meta(extra));
    save_checkpoint(out, &model, best.epoch as u64, None, m)?;
    println!(
        "best epoch {}  train {:.2}%  test {:.2}%  nonzero {:.2}%  -> {}",
        best.epoch,
        train_acc,
        test_acc,
        pct,
        out.display()
    );
    Ok(())
}

fn print_table(report: &Report) {
    println!(
        "{:<18} {:>9} {:>16} {:>16} {:>7} {:>9}",
        "level", "nonzero%", "accuracy", "defense", "trials", "ratio"
    );
    for l in &report.levels {
        let sig = match l.defense_significant {
            Some(true) => "*",
            _ => " ",
        };
        println!(
            "{:<18} {:>9.2} {:>8.2} ± {:<5.2} {:>8.2} ± {:<5.2}{} {:>5} {:>9}",
            l.level,
            l.nonzero_pct.mean,
            l.test_accuracy.mean,
            l.test_accuracy.std,
            l.defense.mean,
            l.defense.std,
            sig,
            l.trials,
            l.tradeoff_ratio.map_or("-".into(), |r| format!("{r:.3}")),
        );
    }
    if report.levels.iter().any(|l| l.underpowered) {
        println!("note: single-trial levels have no spread estimate");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, shadow, out } => {
            let side = Side::new(&cfg, shadow)?;
            let model = side.init()?;
            train_and_save(&side, model, &out, &[("variant", "dense".into())])
        }
        Command::Imp {
            cfg,
            shadow,
            rounds,
            prune_fraction,
            out,
        } => {
            let side = Side::new(&cfg, shadow)?;
            let mut model = side.init()?;
            let imp = ImpConfig {
                rounds,
                prune_fraction,
                train: side.train_config(),
            };
            let test = side.test()?;
            let results = imp_run(&mut model, &side.fit()?, side.val()?.as_ref(), Some(&test), &imp)?;
            for e in write_round_checkpoints(&results, &out)? {
                println!(
                    "round {:>2}  nonzero {:>6.2}%  test {:>6.2}%  {}",
                    e.round,
                    e.nonzero_pct,
                    e.test_accuracy.unwrap_or(f64::NAN),
                    e.file
                );
            }
            Ok(())
        }
        Command::ButterflyTrain {
            cfg,
            shadow,
            segments,
            factors,
            count_only,
            out,
        } => {
            if count_only {
                // ResNet-20 unless an explicit configuration names another residual network
                let arch = match &cfg.config {
                    Some(_) => cfg.resolve()?.arch,
                    None => ArchSpec::resnet20(10),
                };
                let mut model = sparse_mia::nn::build(&arch)?;
                substitute_butterfly(&mut model, segments, factors, 0)?;
                let c = count_model_params(&model);
                println!("{:.2}% ({} of {} parameters)", c.percentage()?, c.nonzero, c.total);
                return Ok(());
            }
            let side = Side::new(&cfg, shadow)?;
            let mut model = side.init()?;
            substitute_butterfly(
                &mut model,
                segments,
                factors,
                derive_seed(side.trial_seed, &[role::BUTTERFLY]),
            )?;
            let out = out.context("--out is required")?;
            train_and_save(
                &side,
                model,
                &out,
                &[("variant", format!("butterfly-s{segments}-l{factors}"))],
            )
        }
        Command::Attack {
            cfg,
            target,
            shadow,
            out,
        } => {
            let side = Side::new(&cfg, false)?;
            let t = load_checkpoint(&target)?.model;
            let s = load_checkpoint(&shadow)?.model;
            let seed = derive_seed(side.trial_seed, &[role::DISCRIMINATOR]);
            let result = evaluate_attack(&t, &s, &side.data, &side.partition, &side.cfg.attack, seed)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let n = side.partition.fit_target().len().min(side.partition.test_target.len());
            let set = build_attack_dataset(
                &t,
                &side.data,
                &side.partition.fit_target()[..n],
                &side.partition.test_target[..n],
                &side.cfg.attack.features,
                seed,
            )?;
            let tsv = out.join("target_attack_set.tsv");
            set.write_tsv(std::io::BufWriter::new(
                std::fs::File::create(&tsv).with_context(|| format!("creating {}", tsv.display()))?,
            ))?;
            let json = out.join("attack.json");
            std::fs::write(&json, serde_json::to_string_pretty(&result)? + "\n")
                .with_context(|| format!("writing {}", json.display()))?;
            for g in &result.grid {
                println!(
                    "layers {} width {:>3} lr {:<7} shadow {:>6.2}%  target {:>6.2}%",
                    g.spec.hidden_layers, g.spec.hidden_width, g.spec.learning_rate, g.shadow_accuracy, g.target_accuracy
                );
            }
            println!(
                "strongest attack {:.2}%  defense {:.2}{}",
                result.attack_accuracy,
                result.defense,
                if result.defense_above_100 { " (above 100: attack below chance)" } else { "" }
            );
            Ok(())
        }
        Command::Experiment { cfg, out, print_config } => {
            let config = cfg.resolve()?;
            if print_config {
                print!("{}", config.to_toml_string()?);
                return Ok(());
            }
            let out = out.context("--out is required")?;
            let report = run_experiment(&config)?;
            let (json, csv) = emit_report(&report, &out)?;
            print_table(&report);
            println!("wrote {} and {}", json.display(), csv.display());
            Ok(())
        }
        Command::Report { input, csv } => {
            let report = read_report(&input)?;
            if csv {
                print!("{}", report.to_csv());
            } else {
                print_table(&report);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
