//! Black-box tests of the `pclr` binary: exit codes, config dumps,
//! refusal paths, and run-to-run determinism of cheap commands.

use std::path::Path;
use std::process::{Command, Output};

fn pclr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pclr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn artifact_checksums(run_dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(run_dir.join("report.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    report["artifacts"].clone()
}

#[test]
fn missing_out_is_a_usage_error() {
    let out = pclr(&["synth"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = pclr(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_refuses_nonempty_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("cohort");
    std::fs::create_dir(&out_dir).unwrap();
    std::fs::write(out_dir.join("existing.txt"), "x").unwrap();
    let out = pclr(&["synth", "--out", out_dir.to_str().unwrap(), "--patients", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--force"), "stderr: {}", stderr(&out));

    let forced = pclr(&[
        "synth",
        "--out",
        out_dir.to_str().unwrap(),
        "--patients",
        "2",
        "--force",
    ]);
    assert!(forced.status.success(), "stderr: {}", stderr(&forced));
}

#[test]
fn synth_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out_dir in [&a, &b] {
        let out = pclr(&[
            "synth",
            "--out",
            out_dir.to_str().unwrap(),
            "--patients",
            "6",
            "--seed",
            "42",
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    assert_eq!(artifact_checksums(&a), artifact_checksums(&b));
}

#[test]
fn pretrain_paper_dump_shows_published_defaults() {
    let out = pclr(&["pretrain", "--profile", "paper", "--out", "unused", "--dump-config"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("patients_per_batch = 512"), "{text}");
    assert!(text.contains("epochs = 50"), "{text}");
    assert!(text.contains("base_lr = 0.1"), "{text}");
    assert!(text.contains("temperature = 0.1"), "{text}");
    assert!(text.contains("embed_dim = 320"), "{text}");
}

#[test]
fn scratch_paper_dump_shows_published_defaults() {
    let out = pclr(&[
        "scratch",
        "--profile",
        "paper",
        "--task",
        "sex",
        "--out",
        "unused",
        "--dump-config",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("learning_rate = 0.001"), "{text}");
    assert!(text.contains("patience = 5"), "{text}");
    assert!(text.contains("checkpoint = \"min-val-loss\""), "{text}");
}

#[test]
fn standard7_features_refuse_the_af_task() {
    let out = pclr(&[
        "lineval",
        "--task",
        "af",
        "--features",
        "standard7",
        "--train-manifest",
        "unused.csv",
        "--test-manifest",
        "unused.csv",
        "--out",
        "unused",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("PR interval undefined under AF"),
        "stderr: {}",
        stderr(&out)
    );
}

#[test]
fn compare_deduplicates_by_config_hash_and_warns_on_missing() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort");
    let out = pclr(&["synth", "--out", cohort.to_str().unwrap(), "--patients", "4"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let cmp_dir = dir.path().join("cmp");
    let missing = dir.path().join("nope");
    let out = pclr(&[
        "compare",
        cohort.to_str().unwrap(),
        cohort.to_str().unwrap(),
        missing.to_str().unwrap(),
        "--out",
        cmp_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let warnings = stderr(&out);
    assert!(warnings.contains("duplicate config hash"), "{warnings}");
    assert!(warnings.contains("nope"), "{warnings}");

    // Two prevalence rows from the single deduplicated report.
    let table = std::fs::read_to_string(cmp_dir.join("compare.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
}
