//! Command-line front end. The `ferkit` binary is a thin wrapper around
//! [`main`].

pub mod config;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{parse_override, resolve, RunConfig, Sources, DATA_ROOT_ENV, RESOLVED_CONFIG};

use crate::dataset::adapters::{
    load_affectnet, AffectNetAdapter, CkPlusAdapter, DatasetAdapter, Fer2013Adapter, JaffeAdapter, SyntheticAdapter,
};
use crate::dataset::{balanced_sample, compute_balanced_n, stratified_split, DatasetManifest, SamplingSpec};
use crate::error::{Error, Result};
use crate::eval::{benchmark, render_reference_tables, Classifier, MetricReport};
use crate::model::weights::{meta_value, read_metadata};
use crate::model::{load_backbone_weights, load_state, save_state, ModelState};
use crate::training::{load_examples, predict, Trainer};

#[derive(Debug, Parser)]
#[command(
    name = "ferkit",
    version,
    about = "Facial expression recognition: sampling, training and benchmarking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `toy` or `full`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset root (overrides the environment variable).
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Any config value, e.g. `--set train.eta_min=1e-9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a class-balanced training pool.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Samples per class (default: smallest class size).
        #[arg(long)]
        n: Option<usize>,
    },
    /// Split a sampled manifest into train and validation manifests.
    Split {
        #[command(flatten)]
        common: Common,
        /// Input manifest (default: `<out>/sampled.jsonl`).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Fine-tune and write checkpoints plus the training log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr_encoder: Option<f64>,
        #[arg(long)]
        lr_decoder: Option<f64>,
        #[arg(long)]
        micro_batch: Option<usize>,
        #[arg(long)]
        accum_steps: Option<usize>,
        #[arg(long)]
        weight_decay: Option<f64>,
        /// Pretrained encoder weights.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Score a model on one manifest.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest to score (default: the validation manifest).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Score a model on several datasets and print the results table.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated: jaffe, ckplus, fer2013, affectnet, synthetic.
        #[arg(long, value_delimiter = ',', default_value = "jaffe,ckplus,fer2013,affectnet")]
        datasets: Vec<String>,
    },
    /// Print the architecture and parameter counts.
    Describe {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Sample { common, .. }
            | Command::Split { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Bench { common, .. }
            | Command::Describe { common } => common,
        }
    }

    fn overrides(&self) -> Vec<String> {
        let c = self.common();
        let mut out = Vec::new();
        let mut push = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{key}={v}"));
            }
        };
        push("preset", c.preset.as_ref().map(|p| format!("{p:?}")));
        push(
            "output_dir",
            c.out.as_ref().map(|p| format!("{:?}", p.display().to_string())),
        );
        push(
            "data.root",
            c.data_root.as_ref().map(|p| format!("{:?}", p.display().to_string())),
        );
        push("train.seed", c.seed.map(|s| s.to_string()));
        match self {
            Command::Sample { n, .. } => push("sampling.n", n.map(|n| n.to_string())),
            Command::Train {
                epochs,
                lr_encoder,
                lr_decoder,
                micro_batch,
                accum_steps,
                weight_decay,
                weights,
                ..
            } => {
                push("train.epochs", epochs.map(|v| v.to_string()));
                push("train.lr_encoder", lr_encoder.map(|v| format!("{v:e}")));
                push("train.lr_decoder", lr_decoder.map(|v| format!("{v:e}")));
                push("train.micro_batch", micro_batch.map(|v| v.to_string()));
                push("train.accum_steps", accum_steps.map(|v| v.to_string()));
                push("train.weight_decay", weight_decay.map(|v| format!("{v:e}")));
                push(
                    "weights",
                    weights.as_ref().map(|p| format!("{:?}", p.display().to_string())),
                );
            }
            _ => {}
        }
        out.extend(c.set.iter().cloned());
        out
    }

    /// Effective configuration for this invocation.
    pub fn resolve(&self, env_data_root: Option<String>) -> Result<RunConfig> {
        let overrides = self
            .overrides()
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>>>()?;
        resolve(&Sources {
            file: self.common().config.clone(),
            env_data_root,
            overrides,
        })
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let env_root = std::env::var(DATA_ROOT_ENV).ok();
    let result = cli.command.resolve(env_root).and_then(|cfg| run(&cli.command, &cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Executes `command` with an already resolved configuration.
pub fn run(command: &Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Describe { .. } => {
            println!("{}", cfg.model.describe());
            Ok(())
        }
        Command::Sample { .. } => cmd_sample(cfg),
        Command::Split { manifest, .. } => cmd_split(cfg, manifest.as_deref()),
        Command::Train { resume, .. } => cmd_train(cfg, resume.as_deref()),
        Command::Eval {
            checkpoint, manifest, ..
        } => cmd_eval(cfg, checkpoint, manifest.as_deref()),
        Command::Bench {
            checkpoint, datasets, ..
        } => cmd_bench(cfg, checkpoint, datasets),
    }
}

fn cmd_sample(cfg: &RunConfig) -> Result<()> {
    let pool = match cfg.data.synthetic_per_class {
        Some(per_class) => SyntheticAdapter::new("synthetic", per_class, cfg.sampling.seed).generate(),
        None => load_affectnet(&cfg.dataset_path("affectnet")?, &cfg.data.affectnet_options)?.train,
    };
    let n = match cfg.sampling.n {
        Some(n) => n,
        None => compute_balanced_n(&pool)?,
    };
    let sampled = balanced_sample(
        &pool,
        SamplingSpec {
            n,
            seed: cfg.sampling.seed,
        },
    )?;
    cfg.save_resolved()?;
    let path = cfg.output_dir.join("sampled.jsonl");
    sampled.save(&path)?;
    println!("sampled {n} per class, {} total -> {}", sampled.len(), path.display());
    Ok(())
}

fn cmd_split(cfg: &RunConfig, manifest: Option<&Path>) -> Result<()> {
    let input = manifest.map_or_else(|| cfg.output_dir.join("sampled.jsonl"), Path::to_path_buf);
    let pool = DatasetManifest::load(&input)?;
    let (train, val) = stratified_split(&pool, cfg.sampling.ratio()?, cfg.sampling.seed)?;
    cfg.save_resolved()?;
    let (tp, vp) = (cfg.output_dir.join("train.jsonl"), cfg.output_dir.join("val.jsonl"));
    train.save(&tp)?;
    val.save(&vp)?;
    println!(
        "train {} -> {}\nval {} -> {}",
        train.len(),
        tp.display(),
        val.len(),
        vp.display()
    );
    Ok(())
}

fn load_manifest_for(path: PathBuf, key: &str) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(Error::config(key, format!("{} does not exist", path.display())));
    }
    DatasetManifest::load(&path)
}

fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<()> {
    let (train, val) = if cfg.train.epochs == 0 {
        (Vec::new(), Vec::new())
    } else {
        let train_m = load_manifest_for(cfg.train_manifest(), "data.train_manifest")?;
        let val_m = load_manifest_for(cfg.val_manifest(), "data.val_manifest")?;
        (
            load_examples(&train_m, &cfg.preprocess)?,
            load_examples(&val_m, &cfg.preprocess)?,
        )
    };

    let mut trainer = match resume {
        Some(path) => {
            let mut t = Trainer::load_checkpoint(path)?;
            if t.model.config() != &cfg.model {
                return Err(Error::config(
                    "model",
                    "checkpoint was trained with a different model config",
                ));
            }
            t.set_epochs(cfg.train.epochs);
            t
        }
        None => {
            let mut model = ModelState::init(&cfg.model, cfg.train.seed)?;
            if let Some(w) = &cfg.weights {
                model = load_backbone_weights(&model, w)?;
            }
            Trainer::new(model, cfg.train.clone(), train.len())?
        }
    };

    cfg.save_resolved()?;
    let out = &cfg.output_dir;
    let ckpt = out.join("checkpoint.safetensors");
    let log_path = out.join("train_log.jsonl");
    trainer.save_checkpoint(&ckpt)?;
    trainer.log().save(&log_path)?;
    let outcome = trainer.fit_with(&train, &val, |t| {
        let r = t.log().epochs.last().expect("called after an epoch");
        println!(
            "epoch {:>3}  loss {:.4}  val WAR {:.2}  ({:.1}s)",
            r.epoch, r.train_loss, r.val_war, r.wall_time_s
        );
        t.save_checkpoint(&ckpt)?;
        t.log().save(&log_path)
    })?;
    save_state(&outcome.best, &out.join("best.safetensors"))?;
    match outcome.best_epoch {
        Some(e) => println!("best epoch {e}, checkpoint -> {}", out.display()),
        None => println!("no epochs run, initial state -> {}", out.display()),
    }
    Ok(())
}

/// Loads either a model file or a training checkpoint (its best state).
pub fn load_model(path: &Path) -> Result<ModelState> {
    let bytes = std::fs::read(path)?;
    let meta = read_metadata(&bytes, path)?;
    if meta_value(&meta, "trainer", path).is_ok() {
        let t = Trainer::load_checkpoint(path)?;
        return Ok(t.best().map_or_else(|| t.model.clone(), |b| b.model.clone()));
    }
    load_state(path)
}

fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, manifest: Option<&Path>) -> Result<()> {
    let model = load_model(checkpoint)?;
    let path = manifest.map_or_else(|| cfg.val_manifest(), Path::to_path_buf);
    let m = load_manifest_for(path.clone(), "--manifest")?;
    let examples = load_examples(&m, &cfg.preprocess)?;
    let logits = predict(&model, &examples)?;
    let targets: Vec<usize> = examples.iter().map(|e| e.label.id()).collect();
    let report = MetricReport::from_logits(path.display().to_string(), logits.view(), &targets)?;
    cfg.save_resolved()?;
    std::fs::write(cfg.output_dir.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
    println!(
        "{}: n={} WAR {:.2}  Top-2 {:.2}  Precision {:.2}  F1 {:.2}",
        report.dataset,
        report.samples,
        report.war,
        report.top2(),
        report.precision_macro,
        report.f1_macro
    );
    Ok(())
}

fn adapter_for(cfg: &RunConfig, name: &str) -> Result<Box<dyn DatasetAdapter>> {
    Ok(match name {
        "jaffe" => Box::new(JaffeAdapter {
            root: cfg.dataset_path("jaffe")?,
        }),
        "ckplus" => Box::new(CkPlusAdapter {
            root: cfg.dataset_path("ckplus")?,
            options: cfg.data.ckplus_options.clone(),
        }),
        "fer2013" => Box::new(Fer2013Adapter {
            csv: cfg.dataset_path("fer2013")?,
            options: cfg.data.fer2013_options.clone(),
        }),
        "affectnet" => Box::new(AffectNetAdapter {
            root: cfg.dataset_path("affectnet")?,
            options: cfg.data.affectnet_options.clone(),
        }),
        "synthetic" => Box::new(SyntheticAdapter::new(
            "Synthetic",
            cfg.data.synthetic_per_class.unwrap_or(5),
            cfg.sampling.seed,
        )),
        other => return Err(Error::config("--datasets", format!("unknown dataset {other:?}"))),
    })
}

fn cmd_bench(cfg: &RunConfig, checkpoint: &Path, datasets: &[String]) -> Result<()> {
    let adapters = datasets
        .iter()
        .map(|d| adapter_for(cfg, d.trim()))
        .collect::<Result<Vec<_>>>()?;
    let model = load_model(checkpoint)?;
    let classifier: &dyn Classifier = &model;
    let report = benchmark(classifier, &adapters, &cfg.preprocess);
    cfg.save_resolved()?;
    let table = report.render_table();
    let mut jsonl = Vec::new();
    report.write_jsonl(&mut jsonl)?;
    std::fs::write(cfg.output_dir.join("bench.jsonl"), jsonl)?;
    std::fs::write(cfg.output_dir.join("bench.txt"), &table)?;
    println!("{table}\n{}", render_reference_tables());
    Ok(())
}
