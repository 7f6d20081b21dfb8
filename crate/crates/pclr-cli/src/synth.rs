//! `pclr synth`: generate a synthetic cohort.

use crate::report::{self, MetricRow, RunReport};
use clap::Args;
use pclr_core::data::synth::{generate_synthetic_cohort, SynthConfig};
use pclr_core::{Error, Result};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for waveforms and manifest.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with a full SynthConfig; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patients: Option<usize>,
    #[arg(long)]
    pub ecgs_min: Option<usize>,
    #[arg(long)]
    pub ecgs_max: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub af_rate: Option<f64>,
    #[arg(long)]
    pub lvh_rate: Option<f64>,
    /// Additive waveform noise sigma in microvolts.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
}

pub fn resolve_config(args: &SynthArgs) -> Result<SynthConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = args.patients {
        config.n_patients = v;
    }
    if let Some(v) = args.ecgs_min {
        config.ecgs_per_patient.0 = v;
    }
    if let Some(v) = args.ecgs_max {
        config.ecgs_per_patient.1 = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.af_rate {
        config.af_rate = v;
    }
    if let Some(v) = args.lvh_rate {
        config.lvh_rate = v;
    }
    if let Some(v) = args.noise {
        config.noise_microvolts = v;
    }
    config.validate()?;
    Ok(config)
}

pub fn run(args: &SynthArgs) -> Result<()> {
    let config = resolve_config(args)?;
    if args.dump_config {
        print!(
            "{}",
            toml::to_string_pretty(&config).map_err(|e| Error::config(e.to_string()))?
        );
        return Ok(());
    }
    if args.out.exists() && std::fs::read_dir(&args.out)?.next().is_some() && !args.force {
        return Err(Error::data(format!(
            "output directory {} is not empty (pass --force to overwrite)",
            args.out.display()
        )));
    }
    let start = Instant::now();
    let manifest = generate_synthetic_cohort(&config, &args.out)?;

    let n_ecgs = manifest.entries.len();
    let n_patients = {
        let mut pids: Vec<&str> = manifest.entries.iter().map(|e| e.patient_id.as_str()).collect();
        pids.sort_unstable();
        pids.dedup();
        pids.len()
    };
    let af = manifest
        .entries
        .iter()
        .filter(|e| {
            e.diagnosis_text
                .as_deref()
                .is_some_and(pclr_core::data::label_af)
        })
        .count();
    let lvh = manifest
        .entries
        .iter()
        .filter(|e| {
            e.diagnosis_text
                .as_deref()
                .is_some_and(pclr_core::data::label_lvh)
        })
        .count();

    // One aggregate checksum over every waveform file keeps the report
    // small for large cohorts.
    let mut artifacts = std::collections::BTreeMap::new();
    artifacts.insert(
        "manifest.csv".to_string(),
        report::sha256_file(&args.out.join("manifest.csv"))?,
    );
    let mut wave_hashes = String::new();
    for e in &manifest.entries {
        wave_hashes.push_str(&report::sha256_file(&args.out.join(&e.path))?);
    }
    artifacts.insert(
        "waveforms".to_string(),
        report::sha256_hex(wave_hashes.as_bytes()),
    );

    let run_report = RunReport {
        command: "synth".to_string(),
        config_hash: report::config_hash(&config)?,
        seed: config.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts,
        metrics: vec![
            MetricRow {
                task: "af".into(),
                size: n_ecgs,
                arm: "cohort".into(),
                metric: "prevalence".into(),
                value: af as f64 / n_ecgs as f64,
            },
            MetricRow {
                task: "lvh".into(),
                size: n_ecgs,
                arm: "cohort".into(),
                metric: "prevalence".into(),
                value: lvh as f64 / n_ecgs as f64,
            },
        ],
        details: serde_json::json!({
            "patients": n_patients,
            "ecgs": n_ecgs,
        }),
    };
    report::write_report(&run_report, &args.out)?;
    println!(
        "wrote {} ({} patients, {} ECGs, AF {:.1}%, LVH {:.1}%)",
        args.out.join("manifest.csv").display(),
        n_patients,
        n_ecgs,
        100.0 * af as f64 / n_ecgs as f64,
        100.0 * lvh as f64 / n_ecgs as f64,
    );
    Ok(())
}
