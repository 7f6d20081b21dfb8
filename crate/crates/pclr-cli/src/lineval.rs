//! `pclr lineval`: linear probes on embeddings or standard features.

use crate::report::{self, MetricRow, RunReport};
use crate::tasks::TaskKind;
use clap::Args;
use pclr_core::data::manifest::{load_manifest, load_record, CohortManifest};
use pclr_core::data::{quality_filter, FilterOutcome, FilterProfile};
use pclr_core::lineval::{
    linear_evaluate_features, read_embeddings, read_labels, standard7_features, FeatureMatrix,
    Metrics,
};
use pclr_core::{Error, Result};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FeatureSource {
    /// The seven standard ECG features from manifest metadata.
    Standard7,
}

#[derive(Debug, Args)]
pub struct LinevalArgs {
    #[arg(long, value_enum)]
    pub task: TaskKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding CSV for the training split (mutually exclusive with
    /// `--features`).
    #[arg(long, conflicts_with = "features", requires = "test_embeddings")]
    pub train_embeddings: Option<PathBuf>,
    #[arg(long, conflicts_with = "features")]
    pub test_embeddings: Option<PathBuf>,
    /// Use a metadata feature set instead of embeddings.
    #[arg(long, value_enum, requires = "train_manifest", requires = "test_manifest")]
    pub features: Option<FeatureSource>,
    /// Label CSV (`ecg_id,target`) for the training split; derived from
    /// `--train-manifest` when omitted.
    #[arg(long)]
    pub train_labels: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// Manifest used for standard features and/or derived labels.
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    #[arg(long)]
    pub test_manifest: Option<PathBuf>,
    /// Arm name recorded in the report (defaults to pclr / standard7).
    #[arg(long)]
    pub arm: Option<String>,
}

/// Drops manifest entries rejected by the quality filter for the task
/// profile, so downstream features and labels see a clean cohort.
fn filtered_manifest(
    path: &std::path::Path,
    task: TaskKind,
) -> Result<CohortManifest> {
    let manifest = load_manifest(path)?;
    let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    let profile = match task {
        TaskKind::Af => FilterProfile::Af,
        _ => FilterProfile::NonAf,
    };
    let mut entries = Vec::with_capacity(manifest.entries.len());
    for entry in manifest.entries {
        let record = load_record(&entry, dir)?;
        if quality_filter(&record, profile) == FilterOutcome::Pass {
            entries.push(entry);
        }
    }
    Ok(CohortManifest { entries })
}

fn load_split(
    args: &LinevalArgs,
    embeddings: &Option<PathBuf>,
    labels: &Option<PathBuf>,
    manifest: &Option<PathBuf>,
) -> Result<(FeatureMatrix, Vec<f64>)> {
    let features = match (args.features, embeddings) {
        (Some(FeatureSource::Standard7), _) => {
            let path = manifest
                .as_ref()
                .ok_or_else(|| Error::config("standard7 features need a manifest"))?;
            standard7_features(&filtered_manifest(path, args.task)?)?
        }
        (None, Some(path)) => read_embeddings(path)?,
        (None, None) => {
            return Err(Error::config(
                "provide --train-embeddings/--test-embeddings or --features standard7",
            ))
        }
    };
    // Labels from an explicit CSV must cover every feature row; labels
    // derived from a manifest may cover fewer rows, because the quality
    // filter legitimately excludes some records.
    let (label_map, derived): (BTreeMap<String, f64>, bool) = match (labels, manifest) {
        (Some(path), _) => {
            let (ids, targets) = read_labels(path)?;
            (ids.into_iter().zip(targets).collect(), false)
        }
        (None, Some(path)) => {
            let m = filtered_manifest(path, args.task)?;
            let map = m
                .entries
                .iter()
                .map(|e| Ok((e.ecg_id.clone(), args.task.target(e)?)))
                .collect::<Result<_>>()?;
            (map, true)
        }
        (None, None) => {
            return Err(Error::config(
                "provide label files or manifests to derive labels from",
            ))
        }
    };
    let mut keep = Vec::with_capacity(features.n);
    let mut targets = Vec::with_capacity(features.n);
    let mut missing = Vec::new();
    for (i, id) in features.ids.iter().enumerate() {
        match label_map.get(id) {
            Some(&t) => {
                keep.push(i);
                targets.push(t);
            }
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() && !derived {
        let total = missing.len();
        missing.truncate(10);
        return Err(Error::data(format!(
            "{total} feature rows have no label; first missing ids: {}",
            missing.join(", ")
        )));
    }
    if targets.is_empty() {
        return Err(Error::data("no feature rows survive the quality filter"));
    }
    let features = if keep.len() == features.n {
        features
    } else {
        features.select_rows(&keep)
    };
    Ok((features, targets))
}

pub fn run(args: &LinevalArgs) -> Result<()> {
    if args.features == Some(FeatureSource::Standard7) && args.task == TaskKind::Af {
        return Err(Error::data(
            "PR interval undefined under AF; the standard-feature baseline does not apply",
        ));
    }
    let start = Instant::now();
    let (x_train, y_train) = load_split(
        args,
        &args.train_embeddings,
        &args.train_labels,
        &args.train_manifest,
    )?;
    let (x_test, y_test) = load_split(
        args,
        &args.test_embeddings,
        &args.test_labels,
        &args.test_manifest,
    )?;

    let result = linear_evaluate_features(
        &x_train,
        &y_train,
        &x_test,
        &y_test,
        args.task.task(),
        args.seed,
    )?;

    let arm = args.arm.clone().unwrap_or_else(|| {
        match args.features {
            Some(FeatureSource::Standard7) => "standard7".to_string(),
            None => "pclr".to_string(),
        }
    });
    let size = x_train.n;
    let mut metrics = vec![MetricRow {
        task: args.task.name().into(),
        size,
        arm: arm.clone(),
        metric: "lambda".into(),
        value: result.lambda,
    }];
    match result.metrics {
        Metrics::Regression { mse, mae, r2 } => {
            for (name, value) in [("mse", mse), ("mae", mae), ("r2", r2)] {
                metrics.push(MetricRow {
                    task: args.task.name().into(),
                    size,
                    arm: arm.clone(),
                    metric: name.into(),
                    value,
                });
            }
        }
        Metrics::Classification { auroc, log_loss } => {
            if let Some(a) = auroc {
                metrics.push(MetricRow {
                    task: args.task.name().into(),
                    size,
                    arm: arm.clone(),
                    metric: "auroc".into(),
                    value: a,
                });
            }
            metrics.push(MetricRow {
                task: args.task.name().into(),
                size,
                arm: arm.clone(),
                metric: "log_loss".into(),
                value: log_loss,
            });
        }
    }

    std::fs::create_dir_all(&args.out)?;
    let run_report = RunReport {
        command: "lineval".to_string(),
        config_hash: report::config_hash(&(
            args.task.name(),
            &arm,
            args.seed,
            &x_train.ids,
            &x_test.ids,
        ))?,
        seed: args.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts: BTreeMap::new(),
        metrics: metrics.clone(),
        details: serde_json::json!({
            "lambda": result.lambda,
            "fold_losses": result.fold_losses,
            "train_rows": x_train.n,
            "test_rows": x_test.n,
        }),
    };
    report::write_report(&run_report, &args.out)?;
    for m in &metrics {
        println!("{} {} {} {} {}", m.task, m.size, m.arm, m.metric, m.value);
    }
    Ok(())
}
