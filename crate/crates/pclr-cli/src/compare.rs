//! `pclr compare`: merge run reports into one metric table.

use crate::report::read_report;
use clap::Args;
use pclr_core::Result;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run directories, each containing a report.json.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Output directory for compare.csv.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &CompareArgs) -> Result<()> {
    let mut seen_hashes = BTreeSet::new();
    let mut rows = Vec::new();
    for dir in &args.runs {
        let path = dir.join("report.json");
        let report = match read_report(&path) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                continue;
            }
        };
        if !seen_hashes.insert(report.config_hash.clone()) {
            eprintln!(
                "warning: skipping {} (duplicate config hash {})",
                path.display(),
                &report.config_hash[..12]
            );
            continue;
        }
        rows.extend(report.metrics);
    }

    std::fs::create_dir_all(&args.out)?;
    let out_path = args.out.join("compare.csv");
    let mut f = std::fs::File::create(&out_path)?;
    writeln!(f, "task,size,arm,metric,value")?;
    for m in &rows {
        writeln!(f, "{},{},{},{},{}", m.task, m.size, m.arm, m.metric, m.value)?;
    }
    println!("wrote {} ({} rows)", out_path.display(), rows.len());
    Ok(())
}
