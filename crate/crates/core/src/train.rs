//! Training: Adam optimization with a blockwise validation holdout, early
//! stopping with best-epoch restoration, and a central finite-difference
//! gradient checker.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::model::{
    fit_linear_regression_closed_form, ModelFamily, ModelInstance, Prediction,
    PredictionGrad,
};
use crate::nn::Mode;
use crate::tensor::{Batch, Matrix};
use crate::windowing::WindowedDataset;

/// Adam moment decay rates and epsilon.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Training configuration. Batch size and learning rate default to the model
/// spec when unset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: None,
            learning_rate: None,
            early_stop_patience: 10,
            seed: 0,
            validation_fraction: 0.15,
        }
    }
}

/// Per-run training record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub wall_time_s: f64,
    pub param_checksum: u64,
}

/// Mean squared error.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Domain(format!(
            "mse over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n)
}

/// Derive an independent RNG stream from a base seed and a stream tag.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    // splitmix64 over the combined value.
    let mut z = base ^ tag.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

// ── Validation split ─────────────────────────────────────────────────────────

/// Split window indices into train and validation sets. The validation set is
/// made of whole (source, segment) blocks, drawn in seeded random order until
/// it reaches the requested fraction (so the total overshoots by at most one
/// block). When windows overlap (stride < window length), training windows
/// whose sample range intersects a validation window are dropped entirely.
pub fn split_train_validation(
    ds: &WindowedDataset,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("validation fraction {fraction} outside [0, 1)")));
    }
    let n = ds.len();
    if n == 0 {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    if fraction == 0.0 {
        return Ok(((0..n).collect(), Vec::new()));
    }

    // Group windows by the segment of their final step.
    let mut blocks: Vec<((u32, u32), Vec<usize>)> = Vec::new();
    for i in 0..n {
        let (src, _, end) = ds.sample_range(i);
        let seg = ds.sources[src as usize].segment_of[end - 1];
        match blocks.last_mut() {
            Some((key, idxs)) if *key == (src, seg) => idxs.push(i),
            _ => blocks.push(((src, seg), vec![i])),
        }
    }
    if blocks.len() < 2 {
        return Err(Error::Config(
            "dataset has a single (source, segment) block; no validation split possible".into(),
        ));
    }

    let mut order: Vec<usize> = (0..blocks.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5111));
    order.shuffle(&mut rng);

    let target = fraction * n as f64;
    let mut val_blocks: Vec<usize> = Vec::new();
    let mut val_count = 0usize;
    for &b in &order {
        if (val_count as f64) >= target {
            break;
        }
        // Never consume every block into validation.
        if val_blocks.len() + 1 == blocks.len() {
            break;
        }
        val_blocks.push(b);
        val_count += blocks[b].1.len();
    }
    if val_blocks.is_empty() {
        val_blocks.push(order[0]);
    }

    let mut is_val = vec![false; n];
    for &b in &val_blocks {
        for &i in &blocks[b].1 {
            is_val[i] = true;
        }
    }
    let val: Vec<usize> = (0..n).filter(|&i| is_val[i]).collect();

    // Drop train windows whose sample range touches any validation window.
    // Validation ranges are merged into disjoint per-source intervals so each
    // candidate costs one binary search instead of a scan over all windows.
    let overlap_possible = ds.stride < ds.window_len;
    let mut val_ranges: alloc::collections::BTreeMap<u32, Vec<(usize, usize)>> =
        alloc::collections::BTreeMap::new();
    if overlap_possible {
        for &i in &val {
            let (src, start, end) = ds.sample_range(i);
            val_ranges.entry(src).or_default().push((start, end));
        }
        for ranges in val_ranges.values_mut() {
            ranges.sort_unstable();
            let mut merged: Vec<(usize, usize)> = Vec::with_capacity(ranges.len());
            for &(s, e) in ranges.iter() {
                match merged.last_mut() {
                    Some((_, le)) if s <= *le => *le = (*le).max(e),
                    _ => merged.push((s, e)),
                }
            }
            *ranges = merged;
        }
    }
    let mut train = Vec::with_capacity(n - val.len());
    for i in 0..n {
        if is_val[i] {
            continue;
        }
        if overlap_possible {
            let (src, start, end) = ds.sample_range(i);
            if let Some(ranges) = val_ranges.get(&src) {
                // First merged interval that ends after this window starts.
                let idx = ranges.partition_point(|&(_, re)| re <= start);
                if idx < ranges.len() && ranges[idx].0 < end {
                    continue;
                }
            }
        }
        train.push(i);
    }
    if train.is_empty() {
        return Err(Error::Config("validation split consumed every training window".into()));
    }
    Ok((train, val))
}

// ── Adam ─────────────────────────────────────────────────────────────────────

/// Adam optimizer state over a fixed parameter layout.
pub struct Adam {
    pub lr: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, param_sizes: &[usize]) -> Self {
        Self {
            lr,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut ModelInstance) {
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - math::powf(ADAM_BETA1, t);
        let bc2 = 1.0 - math::powf(ADAM_BETA2, t);
        for (pi, p) in model.params_mut().into_iter().enumerate() {
            let m = &mut self.m[pi];
            let v = &mut self.v[pi];
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.value[i] -= self.lr * mhat / (math::sqrt(vhat) + ADAM_EPS);
            }
        }
    }
}

// ── Training loop ────────────────────────────────────────────────────────────

fn batch_loss_grad(
    model: &mut ModelInstance,
    batch: &Batch,
    targets: &[f64],
    step_targets: Option<&Matrix>,
    mode: Mode,
) -> Result<(f64, Option<Prediction>)> {
    let pred = model.forward(batch, mode)?;
    let per_step = model.spec.per_step_loss && pred.per_step.is_some();
    let loss = if per_step {
        let steps = pred.per_step.as_ref().unwrap();
        let st = step_targets.expect("per-step targets required for per-step loss");
        mse_loss(&steps.data, &st.data)?
    } else {
        mse_loss(&pred.scalar, targets)?
    };
    Ok((loss, Some(pred)))
}

/// Train with Adam on MSE, restoring the parameters of the best validation
/// epoch. With an empty validation set the early-stopping signal falls back
/// to the training loss.
pub fn train(
    model: &mut ModelInstance,
    data: &WindowedDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if train_idx.is_empty() {
        return Err(Error::Config("no training windows".into()));
    }
    #[cfg(feature = "std")]
    let t0 = std::time::Instant::now();

    // Closed-form family: a single exact fit, no epochs.
    if model.spec.family == ModelFamily::LinReg {
        return train_linreg_closed_form(model, data, train_idx, val_idx, cfg);
    }

    let batch_size = cfg.batch_size.unwrap_or(model.spec.batch_size).max(1);
    let lr = cfg.learning_rate.unwrap_or(model.spec.learning_rate);
    if lr <= 0.0 {
        return Err(Error::Config(format!("non-positive learning rate {lr}")));
    }
    let sizes: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
    let mut adam = Adam::new(lr, &sizes);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0x7e41));

    let mut order: Vec<usize> = train_idx.to_vec();
    let mut batch = Batch::zeros(batch_size, data.window_len, data.n_channels());
    let mut targets: Vec<f64> = Vec::with_capacity(batch_size);

    let mut report = TrainReport {
        train_curve: Vec::new(),
        val_curve: Vec::new(),
        best_epoch: 0,
        epochs_run: 0,
        wall_time_s: 0.0,
        param_checksum: 0,
    };
    let mut best_loss = f64::INFINITY;
    let mut best_state = model.state_values();
    let mut bad_epochs = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(batch_size) {
            let b = chunk.len();
            let mut view = if b == batch_size {
                core::mem::replace(&mut batch, Batch::zeros(0, 0, 0))
            } else {
                Batch::zeros(b, data.window_len, data.n_channels())
            };
            data.fill_batch(chunk, &mut view, &mut targets);
            let step_targets =
                model.spec.per_step_loss.then(|| data.step_targets(chunk));

            model.zero_grad();
            let (loss, pred) =
                batch_loss_grad(model, &view, &targets, step_targets.as_ref(), Mode::Train)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "epoch {epoch}, batch of {b}: loss {loss}; first target {:?}",
                    targets.first()
                )));
            }
            let pred = pred.unwrap();
            if model.spec.per_step_loss && pred.per_step.is_some() {
                let steps = pred.per_step.as_ref().unwrap();
                let st = step_targets.as_ref().unwrap();
                let scale = 2.0 / steps.data.len() as f64;
                let mut grad = Matrix::zeros(steps.rows, steps.cols);
                for i in 0..steps.data.len() {
                    grad.data[i] = scale * (steps.data[i] - st.data[i]);
                }
                model.backward(&PredictionGrad::PerStep(&grad))?;
            } else {
                let scale = 2.0 / pred.scalar.len() as f64;
                let grad: Vec<f64> =
                    pred.scalar.iter().zip(&targets).map(|(p, t)| scale * (p - t)).collect();
                model.backward(&PredictionGrad::Scalar(&grad))?;
            }
            adam.step(model);

            epoch_loss += loss * b as f64;
            seen += b;
            if b == batch_size {
                batch = view;
            }
        }
        let train_loss = epoch_loss / seen as f64;

        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            evaluate_loss(model, data, val_idx)?
        };
        report.train_curve.push(train_loss);
        report.val_curve.push(val_loss);
        report.epochs_run = epoch + 1;

        if val_loss < best_loss {
            best_loss = val_loss;
            report.best_epoch = epoch;
            best_state = model.state_values();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > cfg.early_stop_patience {
                break;
            }
        }
    }

    model.set_state_values(&best_state)?;
    report.param_checksum = model.param_checksum();
    #[cfg(feature = "std")]
    {
        report.wall_time_s = t0.elapsed().as_secs_f64();
    }
    Ok(report)
}

fn train_linreg_closed_form(
    model: &mut ModelInstance,
    data: &WindowedDataset,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    #[cfg(feature = "std")]
    let t0 = std::time::Instant::now();
    let _ = cfg;
    let in_dim = data.window_len * data.n_channels();
    let mut design = Matrix::zeros(train_idx.len(), in_dim + 1);
    let mut y = Vec::with_capacity(train_idx.len());
    for (r, &i) in train_idx.iter().enumerate() {
        let w = data.window(i);
        *design.at_mut(r, 0) = 1.0;
        design.row_mut(r)[1..].copy_from_slice(&w.features.data);
        y.push(w.target);
    }
    let fit = fit_linear_regression_closed_form(&design, &y)?;
    match &mut model.net {
        crate::model::Net::LinReg(n) => n.install_fit(&fit)?,
        _ => return Err(Error::Contract("closed-form path requires the linreg family".into())),
    }
    let train_loss = evaluate_loss(model, data, train_idx)?;
    let val_loss =
        if val_idx.is_empty() { train_loss } else { evaluate_loss(model, data, val_idx)? };
    #[cfg_attr(not(feature = "std"), allow(unused_mut))]
    let mut report = TrainReport {
        train_curve: vec![train_loss],
        val_curve: vec![val_loss],
        best_epoch: 0,
        epochs_run: 1,
        wall_time_s: 0.0,
        param_checksum: model.param_checksum(),
    };
    #[cfg(feature = "std")]
    {
        report.wall_time_s = t0.elapsed().as_secs_f64();
    }
    Ok(report)
}

/// Scalar MSE of the model over the given windows, in eval mode.
pub fn evaluate_loss(
    model: &mut ModelInstance,
    data: &WindowedDataset,
    idxs: &[usize],
) -> Result<f64> {
    let preds = predict_windows(model, data, idxs)?;
    let targets: Vec<f64> = idxs.iter().map(|&i| data.target(i)).collect();
    mse_loss(&preds, &targets)
}

/// Eval-mode predictions over windows, batched.
pub fn predict_windows(
    model: &mut ModelInstance,
    data: &WindowedDataset,
    idxs: &[usize],
) -> Result<Vec<f64>> {
    let chunk_size = 256usize;
    let mut out = Vec::with_capacity(idxs.len());
    let mut targets = Vec::new();
    for chunk in idxs.chunks(chunk_size) {
        let mut batch = Batch::zeros(chunk.len(), data.window_len, data.n_channels());
        data.fill_batch(chunk, &mut batch, &mut targets);
        let pred = model.forward(&batch, Mode::Eval)?;
        out.extend(pred.scalar);
    }
    Ok(out)
}

// ── Gradient check ───────────────────────────────────────────────────────────

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Compare analytic gradients of the scalar MSE loss against central finite
/// differences on a sample of parameters. Runs in evaluation-statistics mode
/// (dropout off, batch norm on running statistics). Parameters whose
/// two-epsilon difference quotients disagree sit on a ReLU / max-pool kink
/// and are skipped.
pub fn finite_difference_gradcheck(
    model: &mut ModelInstance,
    batch: &Batch,
    targets: &[f64],
    eps: f64,
    max_checks: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    model.zero_grad();
    let pred = model.forward(batch, Mode::Eval)?;
    let scale = 2.0 / pred.scalar.len() as f64;
    let grad: Vec<f64> =
        pred.scalar.iter().zip(targets).map(|(p, t)| scale * (p - t)).collect();
    model.backward(&PredictionGrad::Scalar(&grad))?;

    let analytic: Vec<Vec<f64>> = model.params_mut().iter().map(|p| p.grad.clone()).collect();
    let sizes: Vec<usize> = analytic.iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().sum();

    // Sample parameter coordinates without replacement.
    let mut coords: Vec<(usize, usize)> = Vec::new();
    if total <= max_checks {
        for (pi, &n) in sizes.iter().enumerate() {
            for i in 0..n {
                coords.push((pi, i));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x9cadc4ec));
        let mut seen = alloc::collections::BTreeSet::new();
        while coords.len() < max_checks {
            let flat = rng.gen_range(0..total);
            if !seen.insert(flat) {
                continue;
            }
            let mut rem = flat;
            for (pi, &n) in sizes.iter().enumerate() {
                if rem < n {
                    coords.push((pi, rem));
                    break;
                }
                rem -= n;
            }
        }
    }

    let loss_at = |model: &mut ModelInstance| -> Result<f64> {
        let pred = model.forward(batch, Mode::Eval)?;
        mse_loss(&pred.scalar, targets)
    };

    let mut max_rel = 0.0f64;
    let mut checked = 0usize;
    let mut skipped = 0usize;
    for (pi, i) in coords {
        let orig = model.params_mut()[pi].value[i];
        let fd = |e: f64, model: &mut ModelInstance| -> Result<f64> {
            model.params_mut()[pi].value[i] = orig + e;
            let up = loss_at(model)?;
            model.params_mut()[pi].value[i] = orig - e;
            let down = loss_at(model)?;
            model.params_mut()[pi].value[i] = orig;
            Ok((up - down) / (2.0 * e))
        };
        let g1 = fd(eps, model)?;
        let g2 = fd(eps / 2.0, model)?;
        // A genuine kink makes the two difference quotients disagree far
        // beyond the O(eps^2) truncation error of a smooth function.
        if (g1 - g2).abs() > 0.05 * g1.abs().max(g2.abs()).max(1e-7) {
            skipped += 1;
            continue;
        }
        let rel = (analytic[pi][i] - g1).abs() / g1.abs().max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
        checked += 1;
    }
    Ok(GradcheckReport { max_rel_error: max_rel, checked, skipped_kinks: skipped })
}
