//! Patient-pair batch construction, the NT-Xent contrastive loss, and the
//! pre-training loop.
//!
//! A contrastive batch holds `2N` ECGs from `N` distinct patients: two
//! independent draws (with replacement) per patient, the first draws in
//! rows `0..N` and the second in rows `N..2N`, so row `p` and row `p+N`
//! form the positive pair for patient `p`.
//!
//! The batch loss sums the pair loss over the `N` positive pairs in one
//! direction only; set `symmetric` for the both-directions variant.

use crate::checkpoint::save_checkpoint;
use crate::encoder::ModelState;
use crate::error::{Error, Result};
use crate::optim::cosine_lr;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// One patient's preprocessed ECGs, each a `input_len * leads` row-major
/// waveform matrix.
#[derive(Debug, Clone)]
pub struct PatientEcgs {
    pub patient_id: String,
    pub ecgs: Vec<Vec<f32>>,
}

/// Preprocessed cohort grouped by patient.
#[derive(Debug, Clone)]
pub struct PatientIndex {
    pub patients: Vec<PatientEcgs>,
    pub input_len: usize,
    pub leads: usize,
}

impl PatientIndex {
    /// Drops patients that would make the contrastive pairing degenerate.
    pub fn retain_multi_ecg_patients(&mut self) {
        self.patients.retain(|p| p.ecgs.len() >= 2);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    /// Patients per batch (`N`); the batch holds `2N` ECGs.
    pub patients_per_batch: usize,
    pub epochs: u64,
    pub base_lr: f64,
    pub temperature: f64,
    pub seed: u64,
    /// Fraction of patients held out for checkpoint selection.
    pub validation_fraction: f64,
    /// Sum the pair loss in both directions (SimCLR-style) instead of the
    /// single direction of the reference formulation.
    pub symmetric: bool,
}

impl PretrainConfig {
    /// Reference-scale hyperparameters.
    pub fn paper() -> Self {
        PretrainConfig {
            patients_per_batch: 512,
            epochs: 50,
            base_lr: 0.1,
            temperature: 0.1,
            seed: 0,
            validation_fraction: 0.1,
            symmetric: false,
        }
    }

    /// Desk-scale hyperparameters for laptop-sized cohorts.
    pub fn desk() -> Self {
        PretrainConfig {
            patients_per_batch: 8,
            epochs: 10,
            base_lr: 0.003,
            temperature: 0.1,
            seed: 0,
            validation_fraction: 0.25,
            symmetric: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patients_per_batch == 0 || self.epochs == 0 {
            return Err(Error::config("patients_per_batch and epochs must be positive"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::config("temperature must be positive"));
        }
        if self.base_lr <= 0.0 {
            return Err(Error::config("base_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction must lie in [0,1)"));
        }
        Ok(())
    }
}

/// Assembles a `[2N, L, C]` batch for the given patients: two uniform
/// draws with replacement per patient, first draws in rows `0..N`.
pub fn build_batch(
    index: &PatientIndex,
    patient_sample: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<f32>> {
    let n = patient_sample.len();
    let row_len = index.input_len * index.leads;
    let mut data = vec![0.0f32; 2 * n * row_len];
    for (slot, &pi) in patient_sample.iter().enumerate() {
        let patient = index
            .patients
            .get(pi)
            .ok_or_else(|| Error::data(format!("patient index {pi} out of range")))?;
        if patient.ecgs.is_empty() {
            return Err(Error::data(format!(
                "patient {} has no ECGs",
                patient.patient_id
            )));
        }
        let first = rng.random_range(0..patient.ecgs.len());
        let second = rng.random_range(0..patient.ecgs.len());
        data[slot * row_len..(slot + 1) * row_len].copy_from_slice(&patient.ecgs[first]);
        let off = (n + slot) * row_len;
        data[off..off + row_len].copy_from_slice(&patient.ecgs[second]);
    }
    Tensor::from_vec(&[2 * n, index.input_len, index.leads], data)
}

/// Cosine similarity; zero-norm vectors are a loud failure, not an epsilon.
pub fn cosine_similarity<F: Scalar>(u: &[F], v: &[F]) -> Result<F> {
    let mut dot = F::zero();
    let mut nu = F::zero();
    let mut nv = F::zero();
    for (&a, &b) in u.iter().zip(v.iter()) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == F::zero() || nv == F::zero() {
        return Err(Error::Degenerate(
            "cosine similarity of a zero-norm projection".to_string(),
        ));
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Row-normalized copy of `z [2N, D]`; errors on any zero-norm row.
fn normalize_rows<F: Scalar>(z: &Tensor<F>) -> Result<(Vec<F>, Vec<F>)> {
    let (rows, d) = (z.dim(0), z.dim(1));
    let mut unit = vec![F::zero(); rows * d];
    let mut norms = vec![F::zero(); rows];
    for r in 0..rows {
        let row = &z.data()[r * d..(r + 1) * d];
        let n2: F = row.iter().map(|&x| x * x).sum();
        if n2 == F::zero() {
            return Err(Error::Degenerate(format!(
                "projection row {r} has zero norm"
            )));
        }
        let n = n2.sqrt();
        norms[r] = n;
        for (u, &x) in unit[r * d..(r + 1) * d].iter_mut().zip(row.iter()) {
            *u = x / n;
        }
    }
    Ok((unit, norms))
}

fn check_pairing<F: Scalar>(z: &Tensor<F>) -> Result<(usize, usize)> {
    if z.rank() != 2 {
        return Err(Error::dim("projections must be [2N, D]".to_string()));
    }
    let rows = z.dim(0);
    if rows == 0 || rows % 2 != 0 {
        return Err(Error::dim(format!(
            "pairing error: projection row count {rows} is not an even, positive 2N"
        )));
    }
    Ok((rows / 2, z.dim(1)))
}

/// Loss for one anchor row `i` against its positive `j`, with
/// max-subtraction over the `k != i` denominator.
fn anchor_loss<F: Scalar>(unit: &[F], rows: usize, d: usize, i: usize, j: usize, tau: F) -> F {
    let ui = &unit[i * d..(i + 1) * d];
    let mut sims = Vec::with_capacity(rows - 1);
    let mut pos = F::zero();
    for k in 0..rows {
        if k == i {
            continue;
        }
        let uk = &unit[k * d..(k + 1) * d];
        let mut dot = F::zero();
        for (&a, &b) in ui.iter().zip(uk.iter()) {
            dot += a * b;
        }
        let s = dot / tau;
        if k == j {
            pos = s;
        }
        sims.push(s);
    }
    let m = sims.iter().cloned().fold(F::neg_infinity(), F::max);
    let denom: F = sims.iter().map(|&s| (s - m).exp()).sum();
    -(pos - m) + denom.ln()
}

/// Normalized temperature-scaled cross entropy for one ordered pair.
pub fn ntxent_pair_loss<F: Scalar>(i: usize, j: usize, z: &Tensor<F>, tau: f64) -> Result<F> {
    let (_, d) = check_pairing(z)?;
    let rows = z.dim(0);
    if i == j || i >= rows || j >= rows {
        return Err(Error::config(format!(
            "pair indices ({i},{j}) invalid for {rows} rows"
        )));
    }
    if tau <= 0.0 {
        return Err(Error::config("temperature must be positive"));
    }
    let (unit, _) = normalize_rows(z)?;
    Ok(anchor_loss(&unit, rows, d, i, j, F::from_f64_lossy(tau)))
}

/// Batch loss: sum of the pair loss over the `N` positive pairs
/// `(p, p+N)`; with `symmetric`, also the reversed direction.
pub fn batch_loss<F: Scalar>(z: &Tensor<F>, tau: f64, symmetric: bool) -> Result<F> {
    let (n, d) = check_pairing(z)?;
    if tau <= 0.0 {
        return Err(Error::config("temperature must be positive"));
    }
    let rows = 2 * n;
    let (unit, _) = normalize_rows(z)?;
    let t = F::from_f64_lossy(tau);
    let mut total = F::zero();
    for p in 0..n {
        total += anchor_loss(&unit, rows, d, p, p + n, t);
        if symmetric {
            total += anchor_loss(&unit, rows, d, p + n, p, t);
        }
    }
    Ok(total)
}

/// Batch loss plus its analytic gradient w.r.t. every projection entry.
pub fn batch_loss_backward<F: Scalar>(
    z: &Tensor<F>,
    tau: f64,
    symmetric: bool,
) -> Result<(F, Tensor<F>)> {
    let (n, d) = check_pairing(z)?;
    if tau <= 0.0 {
        return Err(Error::config("temperature must be positive"));
    }
    let rows = 2 * n;
    let (unit, norms) = normalize_rows(z)?;
    let inv_tau = F::one() / F::from_f64_lossy(tau);

    // Gradient accumulates on the unit rows first.
    let mut du = vec![F::zero(); rows * d];
    let mut total = F::zero();

    let mut anchors: Vec<(usize, usize)> = (0..n).map(|p| (p, p + n)).collect();
    if symmetric {
        anchors.extend((0..n).map(|p| (p + n, p)));
    }
    let mut sims = vec![F::zero(); rows];
    for &(i, j) in &anchors {
        let ui = &unit[i * d..(i + 1) * d];
        let mut m = F::neg_infinity();
        for k in 0..rows {
            if k == i {
                continue;
            }
            let uk = &unit[k * d..(k + 1) * d];
            let mut dot = F::zero();
            for (&a, &b) in ui.iter().zip(uk.iter()) {
                dot += a * b;
            }
            let s = dot * inv_tau;
            sims[k] = s;
            if s > m {
                m = s;
            }
        }
        let mut denom = F::zero();
        for k in 0..rows {
            if k != i {
                denom += (sims[k] - m).exp();
            }
        }
        total += -(sims[j] - m) + denom.ln();

        // d loss / d s_k = softmax_k - [k == j]; chain to unit rows.
        for k in 0..rows {
            if k == i {
                continue;
            }
            let mut w = (sims[k] - m).exp() / denom;
            if k == j {
                w -= F::one();
            }
            if w == F::zero() {
                continue;
            }
            let coef = w * inv_tau;
            let uk = unit[k * d..(k + 1) * d].to_vec();
            let ui_row = unit[i * d..(i + 1) * d].to_vec();
            for (g, &ukv) in du[i * d..(i + 1) * d].iter_mut().zip(uk.iter()) {
                *g += coef * ukv;
            }
            for (g, &uiv) in du[k * d..(k + 1) * d].iter_mut().zip(ui_row.iter()) {
                *g += coef * uiv;
            }
        }
    }

    // Through the normalization: dz = (du - u (u . du)) / ||z||.
    let mut dz = vec![F::zero(); rows * d];
    for r in 0..rows {
        let u = &unit[r * d..(r + 1) * d];
        let g = &du[r * d..(r + 1) * d];
        let mut proj = F::zero();
        for (&a, &b) in u.iter().zip(g.iter()) {
            proj += a * b;
        }
        let inv_norm = F::one() / norms[r];
        for ((o, &gv), &uv) in dz[r * d..(r + 1) * d].iter_mut().zip(g.iter()).zip(u.iter()) {
            *o = (gv - uv * proj) * inv_norm;
        }
    }
    Ok((total, Tensor::from_vec(&[rows, d], dz)?))
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Per-positive-pair mean losses, kept alongside the batch sums.
    pub train_pair_mean: f64,
    pub val_pair_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_epoch: u64,
    pub best_val_loss: f64,
}

/// History CSV with the exact header `epoch,lr,train_loss,val_loss`.
pub fn write_history(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,lr,train_loss,val_loss")?;
    for row in history {
        writeln!(f, "{},{},{},{}", row.epoch, row.lr, row.train_loss, row.val_loss)?;
    }
    Ok(())
}

/// Companion CSV with the per-pair mean losses.
pub fn write_history_means(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,train_pair_mean,val_pair_mean")?;
    for row in history {
        writeln!(f, "{},{},{}", row.epoch, row.train_pair_mean, row.val_pair_mean)?;
    }
    Ok(())
}

fn patient_split(n_patients: usize, cfg: &PretrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n_patients).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9).wrapping_add(1));
    order.shuffle(&mut rng);
    let n_val = (n_patients as f64 * cfg.validation_fraction).round() as usize;
    let val = order[..n_val].to_vec();
    let train = order[n_val..].to_vec();
    (train, val)
}

fn epoch_rng(seed: u64, epoch: u64, stream: u64) -> ChaCha8Rng {
    // Derived per (epoch, stream) so an interrupted run resumed from a
    // checkpoint continues with the exact same batch sequence.
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x100_0000_01B3)
            .wrapping_add(epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(stream),
    )
}

fn run_batches(
    model: &mut ModelState,
    index: &PatientIndex,
    patients: &[usize],
    cfg: &PretrainConfig,
    rng: &mut ChaCha8Rng,
    train: bool,
) -> Result<(f64, usize)> {
    let n = cfg.patients_per_batch;
    let mut total = 0.0f64;
    let mut batches = 0usize;
    for chunk in patients.chunks(n) {
        if chunk.len() < n {
            break; // drop the final partial batch
        }
        let batch = build_batch(index, chunk, rng)?;
        if train {
            let h = model.encode_train(&batch)?;
            let z = model.project_train(&h)?;
            let (loss, dz) = batch_loss_backward(&z, cfg.temperature, cfg.symmetric)?;
            if !loss.is_finite() {
                return Err(Error::Degenerate(format!(
                    "non-finite training loss at step {batches}"
                )));
            }
            model.backward_from_projection(&dz)?;
            model.adam_step()?;
            total += loss as f64;
        } else {
            let h = model.encode_infer(&batch)?;
            let z = model.project_infer(&h)?;
            total += batch_loss(&z, cfg.temperature, cfg.symmetric)? as f64;
        }
        batches += 1;
    }
    Ok((total, batches))
}

/// Contrastive pre-training with cosine-decayed Adam and validation-based
/// checkpoint selection.
///
/// Writes `best.ckpt`, `last.ckpt`, `history.csv`, and
/// `history_means.csv` under `out_dir`. If `model.epoch > 0` and a
/// history file is present, training resumes from that epoch and the
/// continuation is identical to an uninterrupted run with the same seed.
pub fn pretrain(
    model: &mut ModelState,
    cfg: &PretrainConfig,
    index: &PatientIndex,
    out_dir: &Path,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let (train_patients, val_patients) = patient_split(index.patients.len(), cfg);
    if train_patients.len() < cfg.patients_per_batch {
        return Err(Error::config(format!(
            "training split has {} patients, need at least patients_per_batch = {}",
            train_patients.len(),
            cfg.patients_per_batch
        )));
    }
    for &pi in train_patients.iter().chain(val_patients.iter()) {
        if index.patients[pi].ecgs.is_empty() {
            return Err(Error::data(format!(
                "patient {} has no ECGs",
                index.patients[pi].patient_id
            )));
        }
    }

    let history_path = out_dir.join("history.csv");
    let mut history: Vec<EpochStats> = Vec::new();
    if model.epoch > 0 && history_path.exists() {
        history = read_history_rows(&history_path, model.epoch)?;
    }
    let mut best_val = history
        .iter()
        .map(|r| r.val_loss)
        .fold(f64::INFINITY, f64::min);
    let mut best_epoch = history
        .iter()
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
        .map(|r| r.epoch)
        .unwrap_or(0);

    let n_pairs = cfg.patients_per_batch as f64 * if cfg.symmetric { 2.0 } else { 1.0 };
    for epoch in model.epoch..cfg.epochs {
        let lr = cosine_lr(cfg.base_lr, epoch, cfg.epochs)?;
        model.adam.learning_rate = lr;

        let mut shuffled = train_patients.clone();
        let mut rng = epoch_rng(cfg.seed, epoch, 2);
        shuffled.shuffle(&mut rng);
        let (train_total, train_batches) =
            run_batches(model, index, &shuffled, cfg, &mut rng, true)?;

        let mut val_rng = epoch_rng(cfg.seed, epoch, 3);
        let mut val_order = val_patients.clone();
        val_order.shuffle(&mut val_rng);
        let (val_total, val_batches) =
            run_batches(model, index, &val_order, cfg, &mut val_rng, false)?;
        if val_batches == 0 {
            return Err(Error::config(
                "validation split too small to form a single batch".to_string(),
            ));
        }

        let train_loss = train_total / train_batches.max(1) as f64;
        let val_loss = val_total / val_batches as f64;
        let stats = EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
            train_pair_mean: train_loss / n_pairs,
            val_pair_mean: val_loss / n_pairs,
        };
        history.push(stats);
        model.epoch = epoch + 1;

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            save_checkpoint(model, &out_dir.join("best.ckpt"))?;
        }
        save_checkpoint(model, &out_dir.join("last.ckpt"))?;
        write_history(&history, &history_path)?;
        write_history_means(&history, &out_dir.join("history_means.csv"))?;
    }

    Ok(PretrainOutcome {
        history,
        best_epoch,
        best_val_loss: best_val,
    })
}

fn read_history_rows(path: &Path, up_to_epoch: u64) -> Result<Vec<EpochStats>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::data(format!("malformed history row: {line}")));
        }
        let epoch: u64 = parts[0]
            .parse()
            .map_err(|_| Error::data(format!("bad epoch in history row: {line}")))?;
        if epoch >= up_to_epoch {
            break;
        }
        rows.push(EpochStats {
            epoch,
            lr: parts[1].parse().map_err(|_| Error::data("bad lr".to_string()))?,
            train_loss: parts[2]
                .parse()
                .map_err(|_| Error::data("bad train_loss".to_string()))?,
            val_loss: parts[3]
                .parse()
                .map_err(|_| Error::data("bad val_loss".to_string()))?,
            train_pair_mean: 0.0,
            val_pair_mean: 0.0,
        });
    }
    Ok(rows)
}
