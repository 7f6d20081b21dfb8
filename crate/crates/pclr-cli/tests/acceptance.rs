//! Acceptance gate: one test per criterion, each printing a single
//! pass/fail line. Structural criteria run against the library directly;
//! behavioral criteria drive the `pclr` binary end to end on synthetic
//! cohorts. Run with `--test acceptance -- --nocapture` to see the lines
//! for passing criteria too.

use pclr_core::contrastive::{batch_loss, batch_loss_backward, cosine_similarity, ntxent_pair_loss};
use pclr_core::data::manifest::{load_manifest, write_manifest, CohortManifest};
use pclr_core::data::{
    label_af, label_lvh, prepare_ecg, resample_lead, EcgRecord, Sex, AF_KEYWORDS, LEAD_ORDER,
    LVH_KEYWORDS,
};
use pclr_core::encoder::{build_model, EncoderConfig, EncoderModel};
use pclr_core::lineval::{
    linear_evaluate_features, logistic_ridge_weights, penalty_grid, ridge_weights, FeatureMatrix,
    Task,
};
use pclr_core::nn::kernels::{self, Padding};
use pclr_core::optim::cosine_lr;
use pclr_core::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

fn check(n: u32, name: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    match std::panic::catch_unwind(body) {
        Ok(()) => println!("criterion {n} ({name}): pass"),
        Err(e) => {
            println!("criterion {n} ({name}): fail");
            std::panic::resume_unwind(e);
        }
    }
}

fn pclr(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_pclr"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "pclr {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn c1_architecture_fidelity() {
    check(1, "architecture fidelity", || {
        let model: EncoderModel<f32> = build_model(&EncoderConfig::default(), 0).unwrap();
        let (total, trainable, frozen) = model.parameter_counts();
        assert_eq!(total, 6_600_352);
        assert_eq!(trainable, 6_596_624);
        assert_eq!(frozen, 3_728);

        // Reference per-layer listing: (layer, per-sample output shape,
        // parameter count), in network order.
        let expected: Vec<(&str, Vec<usize>, usize)> = vec![
            ("stem.conv", vec![4096, 64], 12_288),
            ("stem.bn", vec![4096, 64], 256),
            ("block1.conv_a", vec![4096, 128], 131_072),
            ("block1.bn_a", vec![4096, 128], 512),
            ("block1.conv_b", vec![1024, 128], 262_144),
            ("block1.skip_pool", vec![1024, 64], 0),
            ("block1.skip_conv", vec![1024, 128], 8_192),
            ("block1.bn_out", vec![1024, 128], 512),
            ("block2.conv_a", vec![1024, 196], 401_408),
            ("block2.bn_a", vec![1024, 196], 784),
            ("block2.conv_b", vec![256, 196], 614_656),
            ("block2.skip_pool", vec![256, 128], 0),
            ("block2.skip_conv", vec![256, 196], 25_088),
            ("block2.bn_out", vec![256, 196], 784),
            ("block3.conv_a", vec![256, 256], 802_816),
            ("block3.bn_a", vec![256, 256], 1_024),
            ("block3.conv_b", vec![64, 256], 1_048_576),
            ("block3.skip_pool", vec![64, 196], 0),
            ("block3.skip_conv", vec![64, 256], 50_176),
            ("block3.bn_out", vec![64, 256], 1_024),
            ("block4.conv_a", vec![64, 320], 1_310_720),
            ("block4.bn_a", vec![64, 320], 1_280),
            ("block4.conv_b", vec![16, 320], 1_638_400),
            ("block4.skip_pool", vec![16, 256], 0),
            ("block4.skip_conv", vec![16, 320], 81_920),
            ("block4.bn_out", vec![16, 320], 1_280),
            ("embed", vec![320], 0),
            ("projection_0", vec![320], 102_720),
            ("projection", vec![320], 102_720),
        ];
        let got = model.layer_summary();
        assert_eq!(got.len(), expected.len());
        for ((gn, gs, gp), (en, es, ep)) in got.iter().zip(&expected) {
            assert_eq!(gn, en, "layer name");
            assert_eq!(gs, es, "{en} output shape");
            assert_eq!(gp, ep, "{en} parameter count");
        }
    });
}

// ---------------------------------------------------------------- criterion 2

/// Direct 64-bit NT-Xent evaluation with no stability tricks.
fn brute_pair_loss(i: usize, j: usize, z: &Tensor<f64>, tau: f64) -> f64 {
    let rows = z.dim(0);
    let d = z.dim(1);
    let row = |k: usize| &z.data()[k * d..(k + 1) * d];
    let sim = |a: usize, b: usize| cosine_similarity::<f64>(row(a), row(b)).unwrap();
    let mut denom = 0.0;
    for k in 0..rows {
        if k != i {
            denom += (sim(i, k) / tau).exp();
        }
    }
    -((sim(i, j) / tau).exp() / denom).ln()
}

fn brute_batch_loss(z: &Tensor<f64>, tau: f64, symmetric: bool) -> f64 {
    let n = z.dim(0) / 2;
    let mut total = 0.0;
    for i in 0..n {
        total += brute_pair_loss(i, n + i, z, tau);
        if symmetric {
            total += brute_pair_loss(n + i, i, z, tau);
        }
    }
    total
}

#[test]
fn c2_loss_oracle() {
    check(2, "loss oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for trial in 0..100 {
            let n = rng.random_range(1..=8usize);
            let d = rng.random_range(2..=12usize);
            let data: Vec<f64> = (0..2 * n * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let z = Tensor::from_vec(&[2 * n, d], data).unwrap();
            let symmetric = trial % 2 == 1;
            let got = batch_loss(&z, 0.1, symmetric).unwrap();
            let want = brute_batch_loss(&z, 0.1, symmetric);
            assert!(
                (got - want).abs() <= 1e-6 * want.abs().max(1.0),
                "trial {trial}: {got} vs {want}"
            );
            let i = rng.random_range(0..n);
            let gp = ntxent_pair_loss(i, n + i, &z, 0.1).unwrap();
            let wp = brute_pair_loss(i, n + i, &z, 0.1);
            assert!((gp - wp).abs() <= 1e-6 * wp.abs().max(1.0));
        }

        // Hand cases. Orthogonal pairs at tau=0.1: log(1 + 2 e^{-10}).
        let z = Tensor::from_vec(
            &[4, 2],
            vec![1.0f64, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let expected = (1.0f64 + 2.0 * (-10.0f64).exp()).ln();
        assert!((ntxent_pair_loss(0, 2, &z, 0.1).unwrap() - expected).abs() < 1e-9);
        // All-identical projections: log 3.
        let z = Tensor::from_vec(&[4, 2], vec![2.0f64, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0]).unwrap();
        assert!((ntxent_pair_loss(0, 2, &z, 0.1).unwrap() - 3.0f64.ln()).abs() < 1e-9);
    });
}

// ---------------------------------------------------------------- criterion 3

const H: f64 = 1e-5;

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-3)
}

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn fd_check(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    f: impl Fn(&Tensor<f64>) -> Tensor<f64>,
    analytic: &Tensor<f64>,
    label: &str,
) {
    let loss =
        |x: &Tensor<f64>| -> f64 { f(x).data().iter().zip(w.data()).map(|(a, b)| a * b).sum() };
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += H;
        let mut xm = x.clone();
        xm.data_mut()[i] -= H;
        let fd = (loss(&xp) - loss(&xm)) / (2.0 * H);
        let an = analytic.data()[i];
        assert!(rel_close(fd, an), "{label}[{i}]: fd {fd} vs analytic {an}");
    }
}

fn tiny_config() -> EncoderConfig {
    EncoderConfig {
        input_length: 16,
        leads: 2,
        kernel_size: 4,
        stem_channels: 3,
        block_channels: vec![4, 6],
        downsample: 2,
        embed_dim: 6,
        scale_num: 1,
        scale_den: 1,
        bn_epsilon: 1e-3,
        bn_momentum: 0.99,
    }
}

#[test]
fn c3_gradient_correctness() {
    check(3, "gradient correctness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(30);

        // Per-layer checks on randomized small shapes.
        for &stride in &[1usize, 2, 4] {
            let x = rand_tensor(&[2, 8, 3], &mut rng);
            let k = rand_tensor(&[4, 3, 5], &mut rng);
            let out = kernels::conv1d_forward(&x, &k, stride, Padding::Same).unwrap();
            let w = rand_tensor(out.shape(), &mut rng);
            let (gin, gker) = kernels::conv1d_backward(&x, &k, stride, Padding::Same, &w).unwrap();
            fd_check(&x, &w, |x| kernels::conv1d_forward(x, &k, stride, Padding::Same).unwrap(), &gin, "conv in");
            fd_check(&k, &w, |k| kernels::conv1d_forward(&x, k, stride, Padding::Same).unwrap(), &gker, "conv ker");
        }
        {
            let x = rand_tensor(&[3, 6, 4], &mut rng);
            let gamma = rand_tensor(&[4], &mut rng);
            let beta = rand_tensor(&[4], &mut rng);
            let fwd = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
                kernels::batchnorm_forward_train(x, g, b, 1e-3).unwrap().0
            };
            let w = rand_tensor(fwd(&x, &gamma, &beta).shape(), &mut rng);
            let (_, cache, _, _) = kernels::batchnorm_forward_train(&x, &gamma, &beta, 1e-3).unwrap();
            let (gin, dgamma, dbeta) = kernels::batchnorm_backward(&w, &gamma, &cache).unwrap();
            fd_check(&x, &w, |x| fwd(x, &gamma, &beta), &gin, "bn in");
            fd_check(&gamma, &w, |g| fwd(&x, g, &beta), &Tensor::from_vec(&[4], dgamma).unwrap(), "bn gamma");
            fd_check(&beta, &w, |b| fwd(&x, &gamma, b), &Tensor::from_vec(&[4], dbeta).unwrap(), "bn beta");
        }
        {
            let x = rand_tensor(&[2, 8, 3], &mut rng);
            let (out, arg) = kernels::maxpool1d_forward(&x, 4, 4).unwrap();
            let w = rand_tensor(out.shape(), &mut rng);
            let gin = kernels::maxpool1d_backward(&w, &arg, x.shape()).unwrap();
            fd_check(&x, &w, |x| kernels::maxpool1d_forward(x, 4, 4).unwrap().0, &gin, "maxpool");
        }
        {
            let x = rand_tensor(&[3, 5], &mut rng);
            let wt = rand_tensor(&[5, 4], &mut rng);
            let b = rand_tensor(&[4], &mut rng);
            let out = kernels::dense_forward(&x, &wt, &b).unwrap();
            let w = rand_tensor(out.shape(), &mut rng);
            let (gin, gw, gb) = kernels::dense_backward(&x, &wt, &w).unwrap();
            fd_check(&x, &w, |x| kernels::dense_forward(x, &wt, &b).unwrap(), &gin, "dense in");
            fd_check(&wt, &w, |wt| kernels::dense_forward(&x, wt, &b).unwrap(), &gw, "dense w");
            fd_check(&b, &w, |b| kernels::dense_forward(&x, &wt, b).unwrap(), &gb, "dense b");
        }
        {
            let x = rand_tensor(&[2, 6, 3], &mut rng);
            let out = kernels::global_avg_pool(&x).unwrap();
            let w = rand_tensor(out.shape(), &mut rng);
            let gin = kernels::global_avg_pool_backward(&w, 6).unwrap();
            fd_check(&x, &w, |x| kernels::global_avg_pool(x).unwrap(), &gin, "gap");
        }

        // Full encoder + projection + NT-Xent composition.
        let tau = 0.1;
        let config = tiny_config();
        let model: EncoderModel<f64> = build_model::<f64>(&config, 7).unwrap();
        let x = rand_tensor(&[4, config.input_length, config.leads], &mut rng);
        let full_loss = |m: &EncoderModel<f64>| -> f64 {
            let mut m = m.clone();
            let h = m.encode_train(&x).unwrap();
            let z = m.project_train(&h).unwrap();
            batch_loss_backward(&z, tau, false).unwrap().0
        };
        let mut analytic = model.clone();
        let h = analytic.encode_train(&x).unwrap();
        let z = analytic.project_train(&h).unwrap();
        let (_, grad_z) = batch_loss_backward(&z, tau, false).unwrap();
        analytic.backward_from_projection(&grad_z).unwrap();

        let names: Vec<(usize, usize, bool)> = analytic
            .params()
            .iter()
            .enumerate()
            .map(|(i, (_, p))| (i, p.value.len(), p.trainable))
            .collect();
        let mut checked = 0usize;
        for (pi, len, trainable) in names {
            if !trainable {
                continue;
            }
            for idx in (0..len).step_by((len / 4).max(1)) {
                let mut mp = model.clone();
                mp.params_mut()[pi].1.value.data_mut()[idx] += H;
                let mut mm = model.clone();
                mm.params_mut()[pi].1.value.data_mut()[idx] -= H;
                let fd = (full_loss(&mp) - full_loss(&mm)) / (2.0 * H);
                let an = analytic.params()[pi].1.grad.data()[idx];
                assert!(rel_close(fd, an), "param {pi}[{idx}]: fd {fd} vs {an}");
                checked += 1;
            }
        }
        assert!(checked > 50, "only {checked} parameters checked");
    });
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn c4_schedule_and_grid_exactness() {
    check(4, "schedule and grid exactness", || {
        assert_eq!(cosine_lr(0.1, 0, 50).unwrap(), 0.1);
        assert!((cosine_lr(0.1, 25, 50).unwrap() - 0.05).abs() < 1e-15);
        assert!(cosine_lr(0.1, 50, 50).unwrap().abs() < 1e-17);

        let grid = penalty_grid();
        assert_eq!(grid[0], 1e-6);
        assert_eq!(grid[9], 1e5);
        // Log-even spacing: constant successive ratio to 1e-12.
        let r0 = grid[1] / grid[0];
        for w in grid.windows(2) {
            assert!(((w[1] / w[0]) / r0 - 1.0).abs() < 1e-12);
        }
    });
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn c5_linear_eval_oracles() {
    check(5, "linear-eval oracles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(50);

        // Closed-form ridge vs gradient descent on random problems.
        for trial in 0..3 {
            let n = rng.random_range(20..=200usize);
            let d = rng.random_range(2..=20usize);
            let data: Vec<f64> = (0..n * d).map(|_| rng.random::<f64>() - 0.5).collect();
            let x = FeatureMatrix::new((0..n).map(|i| format!("{i}")).collect(), d, data).unwrap();
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let lambda = [0.1, 1.0, 10.0][trial];
            let closed = ridge_weights(&x, &y, lambda).unwrap();
            let mut b = vec![0.0; d];
            let lr = 1e-2 / n as f64 * 24.0;
            for _ in 0..300_000 {
                let mut g = vec![0.0; d];
                for i in 0..n {
                    let r: f64 =
                        x.row(i).iter().zip(&b).map(|(a, w)| a * w).sum::<f64>() - y[i];
                    for j in 0..d {
                        g[j] += r * x.row(i)[j];
                    }
                }
                for j in 0..d {
                    b[j] -= lr * (g[j] + lambda * b[j]);
                }
            }
            for j in 0..d {
                assert!(
                    (b[j] - closed[j]).abs() < 1e-6,
                    "trial {trial} j={j}: {} vs {}",
                    b[j],
                    closed[j]
                );
            }
        }

        // Logistic ridge vs a fine 2-D grid search on the objective.
        let x = FeatureMatrix::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            1,
            vec![-1.0, -0.4, 0.6, 1.0],
        )
        .unwrap();
        let y = [0.0, 0.0, 1.0, 1.0];
        let lambda = 1.0;
        let (w, b) = logistic_ridge_weights(&x, &y, lambda).unwrap();
        let objective = |beta: f64, intercept: f64| -> f64 {
            let n = y.len() as f64;
            let mut nll = 0.0;
            for (i, &yi) in y.iter().enumerate() {
                let t = beta * x.row(i)[0] + intercept;
                nll += (1.0 + t.exp()).ln() - yi * t;
            }
            nll / n + 0.5 * lambda * beta * beta
        };
        let mut best = (0.0, 0.0);
        let mut best_obj = f64::INFINITY;
        let mut bb = -2.0;
        while bb <= 2.0 {
            let mut ii = -2.0;
            while ii <= 2.0 {
                let obj = objective(bb, ii);
                if obj < best_obj {
                    best_obj = obj;
                    best = (bb, ii);
                }
                ii += 1e-3;
            }
            bb += 1e-3;
        }
        assert!((w[0] - best.0).abs() < 1e-3, "{} vs {}", w[0], best.0);
        assert!((b - best.1).abs() < 1e-3, "{} vs {}", b, best.1);

        // No-leakage: the fitted probe is bitwise independent of the test set.
        let n = 24;
        let data: Vec<f64> = (0..n * 3).map(|_| rng.random::<f64>() - 0.5).collect();
        let x = FeatureMatrix::new((0..n).map(|i| format!("{i}")).collect(), 3, data).unwrap();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let ta = x.select_rows(&(0..8).collect::<Vec<_>>());
        let tb = x.select_rows(&[0, 1]);
        let ra = linear_evaluate_features(&x, &y, &ta, &y[..8], Task::Regression, 4).unwrap();
        let rb = linear_evaluate_features(&x, &y, &tb, &y[..2], Task::Regression, 4).unwrap();
        assert_eq!(ra.probe.weights, rb.probe.weights);
        assert_eq!(ra.probe.intercept, rb.probe.intercept);
        assert_eq!(ra.lambda, rb.lambda);
    });
}

// ------------------------------------------------- shared CLI-level helpers

fn read_report(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn metric(report: &serde_json::Value, arm: &str, name: &str) -> f64 {
    report["metrics"]
        .as_array()
        .unwrap()
        .iter()
        .find(|m| m["arm"] == arm && m["metric"] == name)
        .unwrap_or_else(|| panic!("metric {arm}/{name} missing"))["value"]
        .as_f64()
        .unwrap()
}

fn history_val_losses(dir: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(dir.join("history.csv")).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect()
}

/// Splits a cohort manifest into patient-disjoint train/val/test manifests
/// written next to the original, trimming the training split to
/// `train_rows` rows exactly.
fn split_manifest(
    cohort_dir: &Path,
    train_rows: usize,
    val_rows: usize,
) -> (PathBuf, PathBuf, PathBuf) {
    let manifest = load_manifest(&cohort_dir.join("manifest.csv")).unwrap();
    let mut by_patient: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        by_patient.entry(e.patient_id.clone()).or_default().push(i);
    }
    let mut splits = [Vec::new(), Vec::new(), Vec::new()];
    let mut which = 0usize;
    for idx in by_patient.values() {
        if which == 0 && splits[0].len() >= train_rows {
            which = 1;
        }
        if which == 1 && splits[1].len() >= val_rows {
            which = 2;
        }
        splits[which].extend(idx.iter().copied());
    }
    splits[0].truncate(train_rows);
    assert!(!splits[2].is_empty(), "cohort too small for requested split");
    let names = ["train.csv", "val.csv", "test.csv"];
    let mut paths = Vec::new();
    for (rows, name) in splits.iter().zip(names) {
        let part = CohortManifest {
            entries: rows.iter().map(|&i| manifest.entries[i].clone()).collect(),
        };
        let path = cohort_dir.join(name);
        write_manifest(&part, &path).unwrap();
        paths.push(path);
    }
    (paths.remove(0), paths.remove(0), paths.remove(0))
}

fn read_embedding_rows(path: &Path) -> Vec<(String, Vec<f64>)> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| {
            let mut parts = l.split(',');
            let id = parts.next().unwrap().to_string();
            (id, parts.map(|v| v.parse().unwrap()).collect())
        })
        .collect()
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn c6_end_to_end_contrastive_behavior() {
    check(6, "end-to-end contrastive behavior", || {
        let dir = tempfile::tempdir().unwrap();
        let cohort = dir.path().join("cohort");
        let run = dir.path().join("pretrain");
        pclr(&[
            "synth", "--out", cohort.to_str().unwrap(),
            "--patients", "64", "--ecgs-min", "4", "--ecgs-max", "4", "--seed", "100",
        ]);
        pclr(&[
            "pretrain", "--profile", "desk",
            "--manifest", cohort.join("manifest.csv").to_str().unwrap(),
            "--out", run.to_str().unwrap(), "--seed", "100",
        ]);
        let vals = history_val_losses(&run);
        assert_eq!(vals.len(), 10, "ten desk epochs");
        assert!(
            vals[9] < vals[0],
            "final val loss {} not below initial {}",
            vals[9],
            vals[0]
        );

        let emb = dir.path().join("emb");
        pclr(&[
            "embed", "--checkpoint", run.join("best.ckpt").to_str().unwrap(),
            "--manifest", cohort.join("manifest.csv").to_str().unwrap(),
            "--out", emb.to_str().unwrap(),
        ]);
        let manifest = load_manifest(&cohort.join("manifest.csv")).unwrap();
        let patient_of: BTreeMap<&str, &str> = manifest
            .entries
            .iter()
            .map(|e| (e.ecg_id.as_str(), e.patient_id.as_str()))
            .collect();
        let rows = read_embedding_rows(&emb.join("embeddings.csv"));
        let mut same = (0.0, 0usize);
        let mut cross = (0.0, 0usize);
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                let sim = cosine_similarity::<f64>(&rows[i].1, &rows[j].1).unwrap();
                if patient_of[rows[i].0.as_str()] == patient_of[rows[j].0.as_str()] {
                    same.0 += sim;
                    same.1 += 1;
                } else {
                    cross.0 += sim;
                    cross.1 += 1;
                }
            }
        }
        let gap = same.0 / same.1 as f64 - cross.0 / cross.1 as f64;
        assert!(gap >= 0.1, "same/cross-patient cosine gap {gap} below 0.1");
    });
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn c7_directional_orderings() {
    check(7, "directional orderings", || {
        let dir = tempfile::tempdir().unwrap();

        // One shared pre-training run (20 desk epochs on 64 x 4 ECGs).
        let pre_cohort = dir.path().join("pre_cohort");
        let pre = dir.path().join("pre");
        pclr(&[
            "synth", "--out", pre_cohort.to_str().unwrap(),
            "--patients", "64", "--ecgs-min", "4", "--ecgs-max", "4", "--seed", "100",
        ]);
        pclr(&[
            "pretrain", "--profile", "desk",
            "--manifest", pre_cohort.join("manifest.csv").to_str().unwrap(),
            "--out", pre.to_str().unwrap(), "--seed", "100", "--epochs", "20",
        ]);
        let ckpt = pre.join("best.ckpt");

        let mut wins_vs_scratch = 0;
        let mut wins_vs_std7_sex = 0;
        let mut wins_vs_std7_age = 0;
        for seed in 1..=5u64 {
            let sd = dir.path().join(format!("seed{seed}"));
            std::fs::create_dir(&sd).unwrap();
            let cohort = sd.join("cohort");
            pclr(&[
                "synth", "--out", cohort.to_str().unwrap(),
                "--patients", "110", "--seed", &(200 + seed).to_string(),
            ]);
            let (train, val, test) = split_manifest(&cohort, 160, 60);
            let etr = sd.join("etr");
            let ete = sd.join("ete");
            let etr_csv = etr.join("embeddings.csv");
            let ete_csv = ete.join("embeddings.csv");
            for (m, out) in [(&train, &etr), (&test, &ete)] {
                pclr(&[
                    "embed", "--checkpoint", ckpt.to_str().unwrap(),
                    "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap(),
                ]);
            }
            let seed_s = seed.to_string();
            let mut results = BTreeMap::new();
            for (task, arm, extra) in [
                ("sex", "pclr", true),
                ("age", "pclr", true),
                ("sex", "standard7", false),
                ("age", "standard7", false),
            ] {
                let out = sd.join(format!("lv_{task}_{arm}"));
                let mut args = vec![
                    "lineval", "--task", task, "--out", out.to_str().unwrap(),
                    "--train-manifest", train.to_str().unwrap(),
                    "--test-manifest", test.to_str().unwrap(),
                    "--seed", &seed_s,
                ];
                if extra {
                    args.extend([
                        "--train-embeddings", etr_csv.to_str().unwrap(),
                        "--test-embeddings", ete_csv.to_str().unwrap(),
                    ]);
                } else {
                    args.extend(["--features", "standard7"]);
                }
                pclr(&args);
                let name = if task == "age" { "r2" } else { "auroc" };
                results.insert((task, arm), metric(&read_report(&out), arm, name));
            }
            let sc = sd.join("scratch");
            pclr(&[
                "scratch", "--task", "sex",
                "--train-manifest", train.to_str().unwrap(),
                "--val-manifest", val.to_str().unwrap(),
                "--test-manifest", test.to_str().unwrap(),
                "--out", sc.to_str().unwrap(),
                "--seed", &seed_s, "--max-epochs", "30",
            ]);
            let scratch_auroc = metric(&read_report(&sc), "scratch", "auroc");

            let pclr_sex = results[&("sex", "pclr")];
            println!(
                "  seed {seed}: sex auroc pclr {pclr_sex:.3} scratch {scratch_auroc:.3} \
                 std7 {:.3}; age r2 pclr {:.3} std7 {:.3}",
                results[&("sex", "standard7")],
                results[&("age", "pclr")],
                results[&("age", "standard7")],
            );
            if pclr_sex > scratch_auroc {
                wins_vs_scratch += 1;
            }
            if pclr_sex > results[&("sex", "standard7")] {
                wins_vs_std7_sex += 1;
            }
            if results[&("age", "pclr")] > results[&("age", "standard7")] {
                wins_vs_std7_age += 1;
            }
        }
        assert!(wins_vs_scratch >= 4, "pclr > scratch (sex) in {wins_vs_scratch}/5 seeds");
        assert!(wins_vs_std7_sex >= 4, "pclr > standard7 (sex) in {wins_vs_std7_sex}/5 seeds");
        assert!(wins_vs_std7_age >= 4, "pclr > standard7 (age) in {wins_vs_std7_age}/5 seeds");
    });
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn c8_preprocessing_fidelity() {
    check(8, "preprocessing fidelity", || {
        // Affine microvolt waveform: division by 1000 and endpoint-exact
        // linear interpolation onto 4,096 samples.
        let l = 2500usize;
        let signal_uv: Vec<i32> = (0..l).map(|i| 3 * i as i32 - 500).collect();
        let leads: BTreeMap<_, _> = LEAD_ORDER.iter().map(|&lead| (lead, signal_uv.clone())).collect();
        let record = EcgRecord {
            ecg_id: "e".into(),
            patient_id: "p".into(),
            acquired_at: 0,
            sample_rate: 250,
            leads,
            age: Some(50.0),
            sex: Some(Sex::Male),
            diagnosis_text: None,
            hr: None,
            pr: None,
            qrs: None,
            qt: None,
            p_axis: None,
            r_axis: None,
            t_axis: None,
        };
        let prepared = prepare_ecg(&record).unwrap();
        assert_eq!(prepared.data.len(), 4096 * 12);
        let step = (l - 1) as f64 / 4095.0;
        for k in 0..4096 {
            let expected = (3.0 * (k as f64 * step) - 500.0) / 1000.0;
            for lead in 0..12 {
                let got = prepared.data[k * 12 + lead] as f64;
                assert!(
                    (got - expected).abs() < 1e-3 * (expected.abs() + 1.0),
                    "k={k} lead={lead}: {got} vs {expected}"
                );
            }
        }
        // Endpoints are exact.
        let mv: Vec<f32> = signal_uv.iter().map(|&v| v as f32 / 1000.0).collect();
        let res = resample_lead(&mv, 4096).unwrap();
        assert_eq!(res[0], mv[0]);
        assert_eq!(res[4095], mv[l - 1]);

        // Labelers vs brute force on 1,000 randomized mangled texts.
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let filler = "the quick ecg shows sinus and borderline voltage findings";
        for trial in 0..1000 {
            let mut text = String::new();
            for _ in 0..rng.random_range(0..3usize) {
                let a = rng.random_range(0..filler.len());
                let b = rng.random_range(a..filler.len());
                text.push_str(&filler[a..b]);
                text.push(' ');
            }
            if rng.random::<bool>() {
                let kw = if rng.random::<bool>() {
                    AF_KEYWORDS[rng.random_range(0..AF_KEYWORDS.len())]
                } else {
                    LVH_KEYWORDS[rng.random_range(0..LVH_KEYWORDS.len())]
                };
                text.push_str(kw);
                text.push(' ');
            }
            let mangled: String = text
                .chars()
                .map(|c| if rng.random::<bool>() { c.to_ascii_uppercase() } else { c })
                .collect();
            let lower = mangled.to_lowercase();
            let brute_af = AF_KEYWORDS.iter().any(|k| lower.contains(k));
            let brute_lvh = LVH_KEYWORDS.iter().any(|k| lower.contains(k));
            assert_eq!(label_af(&mangled), brute_af, "trial {trial}: {mangled:?}");
            assert_eq!(label_lvh(&mangled), brute_lvh, "trial {trial}: {mangled:?}");
        }
    });
}

// ---------------------------------------------------------------- criterion 9

/// report.json stripped of the wall-time field, which legitimately varies.
fn report_without_walltime(dir: &Path) -> serde_json::Value {
    let mut v = read_report(dir);
    v.as_object_mut().unwrap().remove("wall_time_secs");
    v
}

#[test]
fn c9_cli_determinism() {
    check(9, "CLI determinism", || {
        let dir = tempfile::tempdir().unwrap();
        let run = |tag: &str| -> Vec<serde_json::Value> {
            let base = dir.path().join(tag);
            std::fs::create_dir(&base).unwrap();
            let cohort = base.join("cohort");
            pclr(&["synth", "--out", cohort.to_str().unwrap(), "--patients", "24", "--seed", "9"]);
            let (train, val, test) = split_manifest(&cohort, 40, 15);

            let pre = base.join("pre");
            pclr(&[
                "pretrain", "--profile", "desk",
                "--manifest", cohort.join("manifest.csv").to_str().unwrap(),
                "--out", pre.to_str().unwrap(),
                "--seed", "9", "--patients-per-batch", "4", "--epochs", "2",
            ]);

            let emb = base.join("emb");
            let embt = base.join("embt");
            for (m, out) in [(&train, &emb), (&test, &embt)] {
                pclr(&[
                    "embed", "--checkpoint", pre.join("best.ckpt").to_str().unwrap(),
                    "--manifest", m.to_str().unwrap(), "--out", out.to_str().unwrap(),
                ]);
            }

            let lv = base.join("lineval");
            pclr(&[
                "lineval", "--task", "sex", "--out", lv.to_str().unwrap(),
                "--train-embeddings", emb.join("embeddings.csv").to_str().unwrap(),
                "--test-embeddings", embt.join("embeddings.csv").to_str().unwrap(),
                "--train-manifest", train.to_str().unwrap(),
                "--test-manifest", test.to_str().unwrap(),
                "--seed", "9",
            ]);

            let sc = base.join("scratch");
            pclr(&[
                "scratch", "--task", "sex",
                "--train-manifest", train.to_str().unwrap(),
                "--val-manifest", val.to_str().unwrap(),
                "--test-manifest", test.to_str().unwrap(),
                "--out", sc.to_str().unwrap(),
                "--seed", "9", "--max-epochs", "2", "--batch-size", "16",
            ]);

            let cmp = base.join("cmp");
            pclr(&[
                "compare", lv.to_str().unwrap(), sc.to_str().unwrap(),
                "--out", cmp.to_str().unwrap(),
            ]);
            let table = std::fs::read_to_string(cmp.join("compare.csv")).unwrap();

            vec![
                report_without_walltime(&cohort),
                report_without_walltime(&pre),
                report_without_walltime(&emb),
                report_without_walltime(&embt),
                report_without_walltime(&lv),
                report_without_walltime(&sc),
                serde_json::Value::String(table),
            ]
        };
        let a = run("a");
        let b = run("b");
        for (i, (ra, rb)) in a.iter().zip(&b).enumerate() {
            assert_eq!(ra, rb, "artifact set {i} differs between identical runs");
        }
    });
}
