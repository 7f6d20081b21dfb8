//! `pclr scratch`: supervised encoder+linear-head baseline.

use crate::report::{self, MetricRow, RunReport};
use crate::tasks::TaskKind;
use crate::Profile;
use clap::Args;
use pclr_core::checkpoint::save_checkpoint;
use pclr_core::data::manifest::{load_manifest, load_record};
use pclr_core::data::prepare_ecg;
use pclr_core::encoder::EncoderConfig;
use pclr_core::lineval::{auroc, Task};
use pclr_core::scratch::{scratch_train, LabeledSet, ScratchConfig, ScratchModel};
use pclr_core::tensor::Tensor;
use pclr_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScratchRunConfig {
    /// Which epoch's weights are kept; only "min-val-loss" is implemented.
    #[serde(default = "default_checkpoint_policy")]
    pub checkpoint: String,
    pub encoder: EncoderConfig,
    pub scratch: ScratchConfig,
}

fn default_checkpoint_policy() -> String {
    "min-val-loss".to_string()
}

#[derive(Debug, Args)]
pub struct ScratchArgs {
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    #[arg(long)]
    pub val_manifest: Option<PathBuf>,
    /// Optional holdout manifest evaluated with the best checkpoint.
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: TaskKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "desk")]
    pub profile: Profile,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
}

pub fn resolve_config(args: &ScratchArgs) -> Result<ScratchRunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        }
        None => ScratchRunConfig {
            checkpoint: default_checkpoint_policy(),
            encoder: match args.profile {
                Profile::Paper => EncoderConfig::default(),
                Profile::Desk => EncoderConfig::desk(),
            },
            scratch: ScratchConfig::default(),
        },
    };
    if let Some(v) = args.seed {
        config.scratch.seed = v;
    }
    if let Some(v) = args.batch_size {
        config.scratch.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.scratch.learning_rate = v;
    }
    if let Some(v) = args.patience {
        config.scratch.patience = v;
    }
    if let Some(v) = args.max_epochs {
        config.scratch.max_epochs = v;
    }
    if config.checkpoint != "min-val-loss" {
        return Err(Error::config(format!(
            "unsupported checkpoint policy '{}'",
            config.checkpoint
        )));
    }
    config.encoder.validate()?;
    Ok(config)
}

pub fn load_labeled_set(manifest_path: &Path, task: TaskKind) -> Result<LabeledSet> {
    let manifest = load_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut rows = Vec::with_capacity(manifest.entries.len());
    let mut targets = Vec::with_capacity(manifest.entries.len());
    let mut patient_ids = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let record = load_record(entry, dir)?;
        rows.push(prepare_ecg(&record)?.data);
        targets.push(task.target(entry)?);
        patient_ids.push(entry.patient_id.clone());
    }
    Ok(LabeledSet {
        rows,
        targets,
        patient_ids,
    })
}

/// Head parameters stored beside the encoder checkpoint.
#[derive(Serialize, Deserialize)]
struct HeadFile {
    task: String,
    weight_shape: Vec<usize>,
    weight: Vec<f32>,
    bias: Vec<f32>,
    target_mean: f64,
    target_std: f64,
}

fn save_head(model: &ScratchModel, task: TaskKind, path: &Path) -> Result<()> {
    let head = HeadFile {
        task: task.name().to_string(),
        weight_shape: model.head.weight.value.shape().to_vec(),
        weight: model.head.weight.value.data().to_vec(),
        bias: model.head.bias.value.data().to_vec(),
        target_mean: model.target_mean,
        target_std: model.target_std,
    };
    let json = serde_json::to_vec(&head).map_err(|e| Error::data(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

fn evaluate_on(
    model: &ScratchModel,
    set: &LabeledSet,
    encoder: &EncoderConfig,
) -> Result<Vec<(String, f64)>> {
    let mut scores = Vec::with_capacity(set.len());
    let row_len = encoder.input_length * encoder.leads;
    for chunk in set.rows.chunks(32) {
        let mut data = Vec::with_capacity(chunk.len() * row_len);
        for r in chunk {
            data.extend_from_slice(r);
        }
        let x = Tensor::from_vec(&[chunk.len(), encoder.input_length, encoder.leads], data)?;
        scores.extend(model.predict(&x)?);
    }
    let mut out = Vec::new();
    match model.task {
        Task::Classification => {
            if let Some(a) = auroc(&scores, &set.targets) {
                out.push(("auroc".to_string(), a));
            }
            let mut ll = 0.0;
            for (s, t) in scores.iter().zip(&set.targets) {
                let p = s.clamp(1e-15, 1.0 - 1e-15);
                ll -= if *t > 0.5 { p.ln() } else { (1.0 - p).ln() };
            }
            out.push(("log_loss".to_string(), ll / set.len() as f64));
        }
        Task::Regression => {
            let n = set.len() as f64;
            let mse = scores
                .iter()
                .zip(&set.targets)
                .map(|(s, t)| (s - t) * (s - t))
                .sum::<f64>()
                / n;
            let mae = scores
                .iter()
                .zip(&set.targets)
                .map(|(s, t)| (s - t).abs())
                .sum::<f64>()
                / n;
            let mean = set.targets.iter().sum::<f64>() / n;
            let ss_tot: f64 = set.targets.iter().map(|t| (t - mean) * (t - mean)).sum();
            let r2 = if ss_tot > 0.0 { 1.0 - mse * n / ss_tot } else { f64::NAN };
            out.push(("mse".to_string(), mse));
            out.push(("mae".to_string(), mae));
            out.push(("r2".to_string(), r2));
        }
    }
    Ok(out)
}

pub fn run(args: &ScratchArgs) -> Result<()> {
    let config = resolve_config(args)?;
    if args.dump_config {
        print!(
            "{}",
            toml::to_string_pretty(&config).map_err(|e| Error::config(e.to_string()))?
        );
        return Ok(());
    }
    let train_path = args
        .train_manifest
        .as_ref()
        .ok_or_else(|| Error::config("--train-manifest is required"))?;
    let val_path = args
        .val_manifest
        .as_ref()
        .ok_or_else(|| Error::config("--val-manifest is required"))?;

    let start = Instant::now();
    let train = load_labeled_set(train_path, args.task)?;
    let val = load_labeled_set(val_path, args.task)?;
    let outcome = scratch_train(&config.encoder, args.task.task(), &config.scratch, &train, &val)?;

    std::fs::create_dir_all(&args.out)?;
    save_checkpoint(&outcome.best.encoder, &args.out.join("scratch.ckpt"))?;
    save_head(&outcome.best, args.task, &args.out.join("head.json"))?;
    {
        let mut f = std::fs::File::create(args.out.join("history.csv"))?;
        writeln!(f, "epoch,train_loss,val_loss")?;
        for row in &outcome.history {
            writeln!(f, "{},{},{}", row.epoch, row.train_loss, row.val_loss)?;
        }
    }

    let mut metrics = Vec::new();
    if let Some(test_path) = &args.test_manifest {
        let test = load_labeled_set(test_path, args.task)?;
        for (name, value) in evaluate_on(&outcome.best, &test, &config.encoder)? {
            metrics.push(MetricRow {
                task: args.task.name().into(),
                size: train.len(),
                arm: "scratch".into(),
                metric: name,
                value,
            });
        }
    }

    let mut artifacts = BTreeMap::new();
    for name in ["scratch.ckpt", "head.json", "history.csv"] {
        artifacts.insert(name.to_string(), report::sha256_file(&args.out.join(name))?);
    }
    let run_report = RunReport {
        command: "scratch".to_string(),
        config_hash: report::config_hash(&(&config, args.task.name()))?,
        seed: config.scratch.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts,
        metrics: metrics.clone(),
        details: serde_json::json!({
            "best_epoch": outcome.best_epoch,
            "epochs_run": outcome.history.len(),
            "train_rows": train.len(),
            "val_rows": val.len(),
        }),
    };
    report::write_report(&run_report, &args.out)?;
    println!(
        "scratch-trained {} epochs (best epoch {})",
        outcome.history.len(),
        outcome.best_epoch
    );
    for m in &metrics {
        println!("{} {} {} {} {}", m.task, m.size, m.arm, m.metric, m.value);
    }
    Ok(())
}
