//! `pclr embed`: inference-mode embeddings for every manifest ECG.

use crate::report::{self, RunReport};
use clap::Args;
use pclr_core::checkpoint::load_checkpoint;
use pclr_core::data::manifest::load_manifest;
use pclr_core::lineval::{embed_manifest, write_embeddings};
use pclr_core::Result;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; embeddings land in `<out>/embeddings.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: &EmbedArgs) -> Result<()> {
    let start = Instant::now();
    let model = load_checkpoint(&args.checkpoint)?;
    let manifest = load_manifest(&args.manifest)?;
    let manifest_dir = args.manifest.parent().unwrap_or_else(|| Path::new("."));
    let features = embed_manifest(&model, &manifest, manifest_dir)?;
    std::fs::create_dir_all(&args.out)?;
    let out_path = args.out.join("embeddings.csv");
    write_embeddings(&features, &out_path)?;

    let mut artifacts = BTreeMap::new();
    artifacts.insert("embeddings.csv".to_string(), report::sha256_file(&out_path)?);
    let run_report = RunReport {
        command: "embed".to_string(),
        config_hash: report::config_hash(&(
            &model.config,
            report::sha256_file(&args.checkpoint)?,
        ))?,
        seed: args.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts,
        metrics: Vec::new(),
        details: serde_json::json!({
            "rows": features.n,
            "dims": features.d,
        }),
    };
    report::write_report(&run_report, &args.out)?;
    println!("wrote {} ({} rows x {} dims)", out_path.display(), features.n, features.d);
    Ok(())
}
