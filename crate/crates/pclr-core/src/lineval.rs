//! Linear-evaluation protocol: column standardization, ridge and
//! logistic-ridge fitting, 4-fold cross-validated penalty selection
//! over the canonical 10-value grid, and holdout metrics.
//!
//! Everything here runs in `f64`. Ridge is solved in closed form via a
//! Cholesky factorization of `XᵀX + λI`; logistic ridge by damped
//! Newton iterations (gradient max-norm below 1e-8 or 100 iterations).
//! The intercept is never penalized; for ridge it is absorbed by the
//! standardization/normalization convention.

use crate::data::manifest::{load_record, CohortManifest};
use crate::data::{prepare_ecg, PreparedEcg};
use crate::encoder::ModelState;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Row-major feature matrix with ECG-id row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub n: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, d: usize, data: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if data.len() != n * d {
            return Err(Error::dim(format!(
                "feature matrix: {} values for {n} rows x {d} columns",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("feature matrix contains non-finite values"));
        }
        Ok(FeatureMatrix { ids, n, d, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// New matrix holding the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.row(r));
            ids.push(self.ids[r].clone());
        }
        FeatureMatrix {
            ids,
            n: rows.len(),
            d: self.d,
            data,
        }
    }
}

/// Per-column training statistics. Zero-variance columns get divisor 1
/// and are flagged rather than producing NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub degenerate: Vec<bool>,
}

pub fn standardize_fit(train: &FeatureMatrix) -> Result<Standardizer> {
    if train.n < 2 {
        return Err(Error::data(format!(
            "standardizer needs at least 2 rows, got {}",
            train.n
        )));
    }
    let d = train.d;
    let mut mean = vec![0.0; d];
    for i in 0..train.n {
        for (j, m) in mean.iter_mut().enumerate() {
            *m += train.row(i)[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= train.n as f64);
    let mut var = vec![0.0; d];
    for i in 0..train.n {
        for (j, v) in var.iter_mut().enumerate() {
            let c = train.row(i)[j] - mean[j];
            *v += c * c;
        }
    }
    let mut std = vec![0.0; d];
    let mut degenerate = vec![false; d];
    for j in 0..d {
        let s = (var[j] / train.n as f64).sqrt();
        if s == 0.0 {
            std[j] = 1.0;
            degenerate[j] = true;
        } else {
            std[j] = s;
        }
    }
    Ok(Standardizer {
        mean,
        std,
        degenerate,
    })
}

pub fn standardize_apply(s: &Standardizer, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if x.d != s.mean.len() {
        return Err(Error::dim(format!(
            "standardizer has {} columns, matrix has {}",
            s.mean.len(),
            x.d
        )));
    }
    let mut data = Vec::with_capacity(x.data.len());
    for i in 0..x.n {
        for (j, &v) in x.row(i).iter().enumerate() {
            data.push((v - s.mean[j]) / s.std[j]);
        }
    }
    FeatureMatrix::new(x.ids.clone(), x.d, data)
}

/// The 10 penalties `10^(-6 + 11i/9)`, i = 0..9, ascending; endpoints
/// exactly 1e-6 and 1e5.
pub fn penalty_grid() -> [f64; 10] {
    let mut grid = [0.0; 10];
    for (i, g) in grid.iter_mut().enumerate() {
        *g = match i {
            0 => 1e-6,
            9 => 1e5,
            _ => 10f64.powf(-6.0 + 11.0 * i as f64 / 9.0),
        };
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// Fitted linear probe; for regression, predictions are produced in
/// normalized target units and mapped back through `target_mean`/`target_std`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub task: Task,
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub standardizer: Standardizer,
    pub target_mean: f64,
    pub target_std: f64,
}

impl LinearProbe {
    /// Raw linear scores on unstandardized features (regression scores
    /// are in original target units; classification scores are logits).
    pub fn score(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let xs = standardize_apply(&self.standardizer, x)?;
        let mut out = Vec::with_capacity(xs.n);
        for i in 0..xs.n {
            let z: f64 = xs
                .row(i)
                .iter()
                .zip(&self.weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + self.intercept;
            out.push(match self.task {
                Task::Regression => z * self.target_std + self.target_mean,
                Task::Classification => z,
            });
        }
        Ok(out)
    }
}

/// In-place Cholesky solve of the SPD system `A x = b` (`A` row-major
/// n x n, destroyed).
fn spd_solve(a: &mut [f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    // Lower-triangular factorization A = L Lᵀ.
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 {
            return Err(Error::Degenerate(
                "matrix not positive definite in Cholesky solve".to_string(),
            ));
        }
        let l = diag.sqrt();
        a[j * n + j] = l;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / l;
        }
    }
    // Forward then backward substitution.
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= a[i * n + k] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= a[k * n + i] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    Ok(y)
}

/// Closed-form ridge weights solving `(XᵀX + λI) β = Xᵀ y`. The caller
/// provides standardized features and normalized targets; the intercept
/// is zero by that convention.
pub fn ridge_weights(x: &FeatureMatrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if y.len() != x.n {
        return Err(Error::dim(format!("{} targets for {} rows", y.len(), x.n)));
    }
    if y.iter().any(|v| !v.is_finite()) || lambda < 0.0 {
        return Err(Error::data("ridge inputs must be finite, lambda >= 0"));
    }
    let d = x.d;
    let mut gram = vec![0.0; d * d];
    let mut xty = vec![0.0; d];
    for i in 0..x.n {
        let row = x.row(i);
        for j in 0..d {
            xty[j] += row[j] * y[i];
            for k in j..d {
                gram[j * d + k] += row[j] * row[k];
            }
        }
    }
    for j in 0..d {
        for k in j..d {
            gram[k * d + j] = gram[j * d + k];
        }
        gram[j * d + j] += lambda;
    }
    spd_solve(&mut gram, d, &xty)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss plus `λ‖β‖²/2` (intercept unpenalized); `beta` is the
/// weight vector with the intercept appended.
fn logistic_objective(x: &FeatureMatrix, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let d = x.d;
    let mut loss = 0.0;
    for i in 0..x.n {
        let z: f64 = x.row(i).iter().zip(&beta[..d]).map(|(a, b)| a * b).sum::<f64>() + beta[d];
        // log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0, stably.
        let m = if y[i] > 0.5 { -z } else { z };
        loss += if m > 0.0 {
            m + (1.0 + (-m).exp()).ln()
        } else {
            (1.0 + m.exp()).ln()
        };
    }
    loss / x.n as f64 + 0.5 * lambda * beta[..d].iter().map(|b| b * b).sum::<f64>()
}

/// Newton-with-line-search logistic ridge on standardized features.
/// Returns (weights, intercept). `y` entries must be 0 or 1 and both
/// classes must be present.
pub fn logistic_ridge_weights(
    x: &FeatureMatrix,
    y: &[f64],
    lambda: f64,
) -> Result<(Vec<f64>, f64)> {
    if y.len() != x.n {
        return Err(Error::dim(format!("{} targets for {} rows", y.len(), x.n)));
    }
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::data(
            "logistic ridge requires both classes in training data",
        ));
    }
    let d = x.d;
    let n = x.n as f64;
    let dim = d + 1;
    let mut beta = vec![0.0; dim];
    for _ in 0..100 {
        // Gradient and Hessian of the penalized mean log-loss.
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for i in 0..x.n {
            let row = x.row(i);
            let z: f64 =
                row.iter().zip(&beta[..d]).map(|(a, b)| a * b).sum::<f64>() + beta[d];
            let p = sigmoid(z);
            let r = (p - y[i]) / n;
            let w = (p * (1.0 - p)).max(1e-12) / n;
            for j in 0..d {
                grad[j] += r * row[j];
                for k in j..d {
                    hess[j * dim + k] += w * row[j] * row[k];
                }
                hess[j * dim + d] += w * row[j];
            }
            grad[d] += r;
            hess[d * dim + d] += w;
        }
        for j in 0..d {
            grad[j] += lambda * beta[j];
            hess[j * dim + j] += lambda;
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < 1e-8 {
            break;
        }
        for j in 0..dim {
            for k in j + 1..dim {
                hess[k * dim + j] = hess[j * dim + k];
            }
        }
        let step = spd_solve(&mut hess, dim, &grad)?;
        // Backtracking line search on the objective.
        let f0 = logistic_objective(x, y, &beta, lambda);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = beta
                .iter()
                .zip(&step)
                .map(|(b, s)| b - t * s)
                .collect();
            if logistic_objective(x, y, &trial, lambda) <= f0 {
                beta = trial;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let intercept = beta[d];
    beta.truncate(d);
    Ok((beta, intercept))
}

/// Fits a probe on raw features: standardize, normalize the target for
/// regression, and solve at the given penalty.
pub fn fit_probe(x: &FeatureMatrix, y: &[f64], task: Task, lambda: f64) -> Result<LinearProbe> {
    let standardizer = standardize_fit(x)?;
    let xs = standardize_apply(&standardizer, x)?;
    match task {
        Task::Regression => {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64;
            let std = if var > 0.0 { var.sqrt() } else { 1.0 };
            let yn: Vec<f64> = y.iter().map(|v| (v - mean) / std).collect();
            let weights = ridge_weights(&xs, &yn, lambda)?;
            Ok(LinearProbe {
                task,
                weights,
                intercept: 0.0,
                lambda,
                standardizer,
                target_mean: mean,
                target_std: std,
            })
        }
        Task::Classification => {
            let (weights, intercept) = logistic_ridge_weights(&xs, y, lambda)?;
            Ok(LinearProbe {
                task,
                weights,
                intercept,
                lambda,
                standardizer,
                target_mean: 0.0,
                target_std: 1.0,
            })
        }
    }
}

/// Contiguous fold boundaries after a seeded shuffle.
fn fold_assignment(n: usize, folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut out = Vec::with_capacity(folds);
    let base = n / folds;
    let extra = n % folds;
    let mut cursor = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(order[cursor..cursor + len].to_vec());
        cursor += len;
    }
    out
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub lambda: f64,
    /// `fold_losses[grid_index][fold]` validation losses.
    pub fold_losses: Vec<Vec<f64>>,
    pub folds: Vec<Vec<usize>>,
}

fn validation_loss(probe: &LinearProbe, x: &FeatureMatrix, y: &[f64]) -> Result<f64> {
    let scores = probe.score(x)?;
    Ok(match probe.task {
        Task::Regression => {
            scores
                .iter()
                .zip(y)
                .map(|(s, t)| (s - t) * (s - t))
                .sum::<f64>()
                / y.len() as f64
        }
        Task::Classification => {
            let mut loss = 0.0;
            for (s, t) in scores.iter().zip(y) {
                let p = sigmoid(*s).clamp(1e-15, 1.0 - 1e-15);
                loss -= if *t > 0.5 { p.ln() } else { (1.0 - p).ln() };
            }
            loss / y.len() as f64
        }
    })
}

/// 4-fold (by default) cross-validated penalty selection over the grid.
/// Ties break toward the larger penalty. Standardization and target
/// normalization are refitted inside each training fold. If a
/// classification fold ends up single-class, folds are redrawn once.
pub fn cv_select(
    x: &FeatureMatrix,
    y: &[f64],
    task: Task,
    folds: usize,
    seed: u64,
) -> Result<CvOutcome> {
    if x.n < folds || folds < 2 {
        return Err(Error::data(format!(
            "{} rows cannot form {folds} folds",
            x.n
        )));
    }
    let grid = penalty_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = fold_assignment(x.n, folds, &mut rng);
    if task == Task::Classification {
        let single_class = |folds: &Vec<Vec<usize>>| {
            (0..folds.len()).any(|held| {
                let train: Vec<f64> = folds
                    .iter()
                    .enumerate()
                    .filter(|(f, _)| *f != held)
                    .flat_map(|(_, rows)| rows.iter().map(|&r| y[r]))
                    .collect();
                let pos = train.iter().filter(|&&v| v > 0.5).count();
                pos == 0 || pos == train.len()
            })
        };
        if single_class(&assignment) {
            assignment = fold_assignment(x.n, folds, &mut rng);
            if single_class(&assignment) {
                return Err(Error::data(
                    "a cross-validation training fold contains a single class after redraw",
                ));
            }
        }
    }

    let mut fold_losses = vec![vec![0.0; folds]; grid.len()];
    for held in 0..folds {
        let train_rows: Vec<usize> = assignment
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != held)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        let val_rows = &assignment[held];
        let x_train = x.select_rows(&train_rows);
        let y_train: Vec<f64> = train_rows.iter().map(|&r| y[r]).collect();
        let x_val = x.select_rows(val_rows);
        let y_val: Vec<f64> = val_rows.iter().map(|&r| y[r]).collect();
        for (g, &lambda) in grid.iter().enumerate() {
            let probe = fit_probe(&x_train, &y_train, task, lambda)?;
            fold_losses[g][held] = validation_loss(&probe, &x_val, &y_val)?;
        }
    }
    let mut best = 0;
    let mut best_loss = f64::INFINITY;
    for (g, losses) in fold_losses.iter().enumerate() {
        let mean = losses.iter().sum::<f64>() / folds as f64;
        // `<=` breaks ties toward the larger penalty (grid ascends).
        if mean <= best_loss {
            best_loss = mean;
            best = g;
        }
    }
    Ok(CvOutcome {
        lambda: grid[best],
        fold_losses,
        folds: assignment,
    })
}

/// Holdout metrics.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum Metrics {
    Regression { mse: f64, mae: f64, r2: f64 },
    /// `auroc` is `None` when the test set is single-class.
    Classification { auroc: Option<f64>, log_loss: f64 },
}

/// AUROC via the rank statistic with tie midranks; `None` when only
/// one class is present.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Option<f64> {
    let n = scores.len();
    let pos = labels.iter().filter(|&&l| l > 0.5).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l > 0.5)
        .map(|(_, &r)| r)
        .sum();
    let u = rank_sum - pos as f64 * (pos as f64 + 1.0) / 2.0;
    Some(u / (pos as f64 * neg as f64))
}

pub fn evaluate(probe: &LinearProbe, x_test: &FeatureMatrix, y_test: &[f64]) -> Result<Metrics> {
    let scores = probe.score(x_test)?;
    Ok(match probe.task {
        Task::Regression => {
            let n = y_test.len() as f64;
            let mse = scores
                .iter()
                .zip(y_test)
                .map(|(s, t)| (s - t) * (s - t))
                .sum::<f64>()
                / n;
            let mae = scores
                .iter()
                .zip(y_test)
                .map(|(s, t)| (s - t).abs())
                .sum::<f64>()
                / n;
            let mean = y_test.iter().sum::<f64>() / n;
            let ss_tot: f64 = y_test.iter().map(|t| (t - mean) * (t - mean)).sum();
            let r2 = if ss_tot == 0.0 {
                if mse == 0.0 {
                    1.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                1.0 - mse * n / ss_tot
            };
            Metrics::Regression { mse, mae, r2 }
        }
        Task::Classification => {
            let log_loss = validation_loss(probe, x_test, y_test)?;
            Metrics::Classification {
                auroc: auroc(&scores, y_test),
                log_loss,
            }
        }
    })
}

/// Full probe report: selected penalty, fold losses, and test metrics.
#[derive(Debug, Clone)]
pub struct LinevalReport {
    pub task: Task,
    pub lambda: f64,
    pub fold_losses: Vec<Vec<f64>>,
    pub metrics: Metrics,
    pub probe: LinearProbe,
}

/// End-to-end on feature matrices: cv-select on train, refit on all
/// training rows at λ*, evaluate on test. The test set never
/// influences the fitted probe.
pub fn linear_evaluate_features(
    x_train: &FeatureMatrix,
    y_train: &[f64],
    x_test: &FeatureMatrix,
    y_test: &[f64],
    task: Task,
    seed: u64,
) -> Result<LinevalReport> {
    let cv = cv_select(x_train, y_train, task, 4, seed)?;
    let probe = fit_probe(x_train, y_train, task, cv.lambda)?;
    let metrics = evaluate(&probe, x_test, y_test)?;
    Ok(LinevalReport {
        task,
        lambda: cv.lambda,
        fold_losses: cv.fold_losses,
        metrics,
        probe,
    })
}

/// Embeds every manifest ECG with the encoder in inference mode,
/// returning one 320-dimensional (at paper scale) row per ECG.
pub fn embed_manifest(
    model: &ModelState,
    manifest: &CohortManifest,
    manifest_dir: &Path,
) -> Result<FeatureMatrix> {
    let d = model.config.scaled_embed_dim();
    let mut ids = Vec::with_capacity(manifest.entries.len());
    let mut data = Vec::with_capacity(manifest.entries.len() * d);
    let chunk = 16;
    for entries in manifest.entries.chunks(chunk) {
        let mut prepared = Vec::with_capacity(entries.len());
        for e in entries {
            let record = load_record(e, manifest_dir)?;
            prepared.push(prepare_ecg(&record)?);
            ids.push(e.ecg_id.clone());
        }
        let refs: Vec<&PreparedEcg> = prepared.iter().collect();
        let batch = PreparedEcg::batch(&refs)?;
        let h = model.encode_infer(&batch)?;
        data.extend(h.data().iter().map(|&v| v as f64));
    }
    FeatureMatrix::new(ids, d, data)
}

/// The seven-standard-feature baseline matrix (hr, pr, qrs, qt,
/// p/r/t axes) from manifest metadata.
pub fn standard7_features(manifest: &CohortManifest) -> Result<FeatureMatrix> {
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for e in &manifest.entries {
        let fields = [e.hr, e.pr, e.qrs, e.qt, e.p_axis, e.r_axis, e.t_axis];
        let names = ["hr", "pr", "qrs", "qt", "p_axis", "r_axis", "t_axis"];
        for (f, name) in fields.iter().zip(names) {
            data.push(f.ok_or_else(|| {
                Error::data(format!(
                    "ECG '{}' is missing standard feature '{name}'",
                    e.ecg_id
                ))
            })?);
        }
        ids.push(e.ecg_id.clone());
    }
    FeatureMatrix::new(ids, 7, data)
}

/// Writes `ecg_id,e0..e{D-1}` embedding CSV.
pub fn write_embeddings(x: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["ecg_id".to_string()];
    header.extend((0..x.d).map(|j| format!("e{j}")));
    writer.write_record(&header)?;
    for i in 0..x.n {
        let mut row = vec![x.ids[i].clone()];
        row.extend(x.row(i).iter().map(|v| format!("{v}")));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let d = reader.headers()?.len().saturating_sub(1);
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != d + 1 {
            return Err(Error::data(format!(
                "embedding row {}: expected {} columns, got {}",
                i + 2,
                d + 1,
                row.len()
            )));
        }
        ids.push(row.get(0).unwrap().to_string());
        for field in row.iter().skip(1) {
            data.push(field.parse::<f64>().map_err(|_| {
                Error::data(format!("embedding row {}: bad value '{field}'", i + 2))
            })?);
        }
    }
    FeatureMatrix::new(ids, d, data)
}

/// Writes `ecg_id,target` label CSV.
pub fn write_labels(ids: &[String], targets: &[f64], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["ecg_id", "target"])?;
    for (id, t) in ids.iter().zip(targets) {
        writer.write_record([id.as_str(), &format!("{t}")])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut ids = Vec::new();
    let mut targets = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != 2 {
            return Err(Error::data(format!("label row {}: expected 2 columns", i + 2)));
        }
        ids.push(row.get(0).unwrap().to_string());
        targets.push(row.get(1).unwrap().parse::<f64>().map_err(|_| {
            Error::data(format!("label row {}: bad target", i + 2))
        })?);
    }
    Ok((ids, targets))
}
