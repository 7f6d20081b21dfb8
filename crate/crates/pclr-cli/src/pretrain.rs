//! `pclr pretrain`: contrastive pre-training of the encoder.

use crate::report::{self, MetricRow, RunReport};
use crate::Profile;
use clap::Args;
use pclr_core::checkpoint::load_checkpoint;
use pclr_core::contrastive::{pretrain, PatientEcgs, PatientIndex, PretrainConfig};
use pclr_core::data::manifest::{load_manifest, load_record, CohortManifest};
use pclr_core::data::prepare_ecg;
use pclr_core::encoder::{build_model, EncoderConfig, ModelState};
use pclr_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Everything that influences a pre-training run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PretrainRunConfig {
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Cohort manifest CSV.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Hyperparameter profile; `paper` uses the published defaults,
    /// `desk` a 1/8-width encoder with laptop-sized settings.
    #[arg(long, value_enum, default_value = "desk")]
    pub profile: Profile,
    /// TOML file with a full PretrainRunConfig; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub patients_per_batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// Sum the NT-Xent pair loss in both directions.
    #[arg(long)]
    pub symmetric: bool,
    /// Continue from `<out>/last.ckpt` if present.
    #[arg(long)]
    pub resume: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
}

pub fn resolve_config(args: &PretrainArgs) -> Result<PretrainRunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        }
        None => match args.profile {
            Profile::Paper => PretrainRunConfig {
                encoder: EncoderConfig::default(),
                pretrain: PretrainConfig::paper(),
            },
            Profile::Desk => PretrainRunConfig {
                encoder: EncoderConfig::desk(),
                pretrain: PretrainConfig::desk(),
            },
        },
    };
    if let Some(v) = args.seed {
        config.pretrain.seed = v;
    }
    if let Some(v) = args.patients_per_batch {
        config.pretrain.patients_per_batch = v;
    }
    if let Some(v) = args.epochs {
        config.pretrain.epochs = v;
    }
    if let Some(v) = args.lr {
        config.pretrain.base_lr = v;
    }
    if let Some(v) = args.temperature {
        config.pretrain.temperature = v;
    }
    if let Some(v) = args.validation_fraction {
        config.pretrain.validation_fraction = v;
    }
    if args.symmetric {
        config.pretrain.symmetric = true;
    }
    config.encoder.validate()?;
    config.pretrain.validate()?;
    Ok(config)
}

/// Prepares every manifest ECG and groups the rows by patient,
/// keeping only patients with at least two ECGs.
pub fn build_patient_index(
    manifest: &CohortManifest,
    manifest_dir: &Path,
    encoder: &EncoderConfig,
) -> Result<PatientIndex> {
    let mut by_patient: BTreeMap<String, Vec<Vec<f32>>> = BTreeMap::new();
    for entry in &manifest.entries {
        let record = load_record(entry, manifest_dir)?;
        let prepared = prepare_ecg(&record)?;
        by_patient.entry(entry.patient_id.clone()).or_default().push(prepared.data);
    }
    let mut index = PatientIndex {
        patients: by_patient
            .into_iter()
            .map(|(patient_id, ecgs)| PatientEcgs { patient_id, ecgs })
            .collect(),
        input_len: encoder.input_length,
        leads: encoder.leads,
    };
    index.retain_multi_ecg_patients();
    Ok(index)
}

pub fn run(args: &PretrainArgs) -> Result<()> {
    let config = resolve_config(args)?;
    if args.dump_config {
        print!(
            "{}",
            toml::to_string_pretty(&config).map_err(|e| Error::config(e.to_string()))?
        );
        return Ok(());
    }
    let manifest_path = args
        .manifest
        .as_ref()
        .ok_or_else(|| Error::config("--manifest is required to run pre-training"))?;
    let start = Instant::now();
    let manifest = load_manifest(manifest_path)?;
    let manifest_dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let index = build_patient_index(&manifest, manifest_dir, &config.encoder)?;

    let eligible = index.patients.len();
    let needed = config.pretrain.patients_per_batch;
    if eligible < needed {
        return Err(Error::config(format!(
            "cohort has {eligible} patients with >= 2 ECGs, need at least \
             patients_per_batch = {needed}"
        )));
    }

    std::fs::create_dir_all(&args.out)?;
    let last_path = args.out.join("last.ckpt");
    let mut model: ModelState = if args.resume && last_path.exists() {
        let model = load_checkpoint(&last_path)?;
        if model.config != config.encoder {
            return Err(Error::config(
                "resume checkpoint was trained with a different encoder config",
            ));
        }
        model
    } else {
        build_model(&config.encoder, config.pretrain.seed)?
    };

    let outcome = pretrain(&mut model, &config.pretrain, &index, &args.out)?;

    let mut artifacts = BTreeMap::new();
    for name in ["best.ckpt", "last.ckpt", "history.csv", "history_means.csv"] {
        artifacts.insert(name.to_string(), report::sha256_file(&args.out.join(name))?);
    }
    let final_val = outcome.history.last().map(|h| h.val_loss).unwrap_or(f64::NAN);
    let run_report = RunReport {
        command: "pretrain".to_string(),
        config_hash: report::config_hash(&config)?,
        seed: config.pretrain.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts,
        metrics: vec![
            MetricRow {
                task: "pretrain".into(),
                size: eligible,
                arm: "pclr".into(),
                metric: "best_val_loss".into(),
                value: outcome.best_val_loss,
            },
            MetricRow {
                task: "pretrain".into(),
                size: eligible,
                arm: "pclr".into(),
                metric: "final_val_loss".into(),
                value: final_val,
            },
        ],
        details: serde_json::json!({
            "best_epoch": outcome.best_epoch,
            "epochs_run": outcome.history.len(),
        }),
    };
    report::write_report(&run_report, &args.out)?;
    println!(
        "pre-trained {} epochs on {eligible} patients; best val loss {:.6} at epoch {}",
        outcome.history.len(),
        outcome.best_val_loss,
        outcome.best_epoch
    );
    Ok(())
}
