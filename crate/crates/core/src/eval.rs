//! Leave-one-subject-out evaluation: fold construction, RMSE / NRMSE,
//! per-activity and per-subject aggregation, and the pairwise signal sweep.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::catalog::{Activity, ChannelId, Condition, Selection};
use crate::dataset::SubjectRecording;
use crate::error::{Error, Result};
use crate::math;
use crate::model::{build_model, ModelFamily, ModelSpec};
use crate::train::{
    derive_seed, predict_windows, split_train_validation, train, TrainConfig, TrainReport,
};
use crate::windowing::{apply_scaler, fit_scaler, WindowedDataset};

/// Root mean square error.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Domain(format!(
            "rmse over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    Ok(math::sqrt(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n))
}

/// RMSE normalized by the mean EE of the activity under evaluation.
pub fn nrmse(rmse_value: f64, activity_mean_ee: f64) -> Result<f64> {
    if activity_mean_ee <= 0.0 {
        return Err(Error::Domain(format!(
            "activity mean EE must be positive for NRMSE, got {activity_mean_ee}"
        )));
    }
    Ok(rmse_value / activity_mean_ee)
}

// ── Folds ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test_subject: u32,
    pub train_subjects: Vec<u32>,
}

/// One fold per subject, ordered by subject id; train set is everyone else.
pub fn loso_folds(subject_ids: &[u32]) -> Result<Vec<Fold>> {
    if subject_ids.len() < 2 {
        return Err(Error::Protocol("leave-one-subject-out needs at least 2 subjects".into()));
    }
    let mut ids = subject_ids.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Protocol("duplicate subject ids".into()));
    }
    Ok(ids
        .iter()
        .map(|&test| Fold {
            test_subject: test,
            train_subjects: ids.iter().copied().filter(|&s| s != test).collect(),
        })
        .collect())
}

// ── Fold execution ───────────────────────────────────────────────────────────

/// Experiment-level switches beyond the model spec.
#[derive(Debug, Clone, Copy)]
pub struct ExperimentOptions {
    pub stride: usize,
    /// Keep sit/stand windows in train and test sets.
    pub include_rest: bool,
    /// Standardize inputs with a scaler fitted on the training subjects.
    pub standardize: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { stride: 1, include_rest: true, standardize: true }
    }
}

/// Provenance of one test prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredMeta {
    pub activity: Activity,
    pub condition: Condition,
    pub spans_transition: bool,
}

/// Predictions and targets of one held-out subject.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub test_subject: u32,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
    pub meta: Vec<PredMeta>,
    pub rmse: f64,
    pub train_report: TrainReport,
}

fn rest_filter(ds: &WindowedDataset, include_rest: bool) -> Vec<usize> {
    (0..ds.len())
        .filter(|&i| {
            include_rest
                || !matches!(ds.meta(i).activity, Activity::Sit | Activity::Stand)
        })
        .collect()
}

/// Train on the fold's training subjects and predict every window of the test
/// subject.
pub fn run_fold(
    recordings: &[SubjectRecording],
    fold: &Fold,
    selection: &Selection,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    opts: &ExperimentOptions,
) -> Result<FoldResult> {
    let by_id = |id: u32| -> Result<&SubjectRecording> {
        recordings
            .iter()
            .find(|r| r.subject_id == id)
            .ok_or_else(|| Error::Protocol(format!("subject {id} not in dataset")))
    };
    let train_recs: Vec<&SubjectRecording> =
        fold.train_subjects.iter().map(|&id| by_id(id)).collect::<Result<_>>()?;
    let test_rec = by_id(fold.test_subject)?;

    let mut ds_train =
        WindowedDataset::from_recordings(&train_recs, selection, spec.window_len, opts.stride)?;
    let mut ds_test = WindowedDataset::from_recordings(
        core::slice::from_ref(&test_rec),
        selection,
        spec.window_len,
        opts.stride,
    )?;
    if ds_train.is_empty() || ds_test.is_empty() {
        return Err(Error::Config("fold produced no windows".into()));
    }

    let train_pool = rest_filter(&ds_train, opts.include_rest);
    let test_pool = rest_filter(&ds_test, opts.include_rest);
    if train_pool.is_empty() || test_pool.is_empty() {
        return Err(Error::Config("rest filtering removed every window".into()));
    }

    if opts.standardize {
        let scaler = fit_scaler(&ds_train, &train_pool)?;
        apply_scaler(&scaler, &mut ds_train)?;
        apply_scaler(&scaler, &mut ds_test)?;
    }

    // Deterministic per-fold streams tied to the test subject.
    let fold_seed = derive_seed(cfg.seed, fold.test_subject as u64);
    let (train_idx, val_idx) =
        split_within_pool(&ds_train, &train_pool, cfg.validation_fraction, fold_seed)?;

    let mut model = build_model(spec, selection.len(), spec.window_len, derive_seed(fold_seed, 0xb111d))?;
    let mut fold_cfg = cfg.clone();
    fold_cfg.seed = fold_seed;
    let train_report = train(&mut model, &ds_train, &train_idx, &val_idx, &fold_cfg)?;

    let predictions = predict_windows(&mut model, &ds_test, &test_pool)?;
    let targets: Vec<f64> = test_pool.iter().map(|&i| ds_test.target(i)).collect();
    let meta: Vec<PredMeta> = test_pool
        .iter()
        .map(|&i| {
            let m = ds_test.meta(i);
            PredMeta {
                activity: m.activity,
                condition: m.condition,
                spans_transition: m.spans_transition,
            }
        })
        .collect();
    let fold_rmse = rmse(&predictions, &targets)?;
    Ok(FoldResult {
        test_subject: fold.test_subject,
        predictions,
        targets,
        meta,
        rmse: fold_rmse,
        train_report,
    })
}

/// Validation split restricted to a filtered window pool (e.g. with rest
/// windows excluded): split over the full dataset, then intersect.
fn split_within_pool(
    ds: &WindowedDataset,
    pool: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if pool.len() == ds.len() {
        return split_train_validation(ds, fraction, seed);
    }
    let (train, val) = split_train_validation(ds, fraction, seed)?;
    let in_pool: alloc::collections::BTreeSet<usize> = pool.iter().copied().collect();
    let train: Vec<usize> = train.into_iter().filter(|i| in_pool.contains(i)).collect();
    let val: Vec<usize> = val.into_iter().filter(|i| in_pool.contains(i)).collect();
    if train.is_empty() {
        return Err(Error::Config("validation split consumed every training window".into()));
    }
    Ok((train, val))
}

// ── Aggregation ──────────────────────────────────────────────────────────────

/// Key of a per-activity report row. Transition-flagged samples are pooled
/// into their own row and excluded from per-condition rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RowKey {
    Condition(Activity, Condition),
    Transition,
}

#[derive(Debug, Clone)]
pub struct ActivityRow {
    pub key: RowKey,
    pub n_samples: usize,
    pub rmse: f64,
    pub mean_ee: f64,
    /// `None` when the activity mean is non-positive (flagged).
    pub nrmse: Option<f64>,
}

/// Pool fold predictions into per-(activity, condition) RMSE and NRMSE rows.
/// The activity mean is taken over the ground-truth targets of the pooled
/// test samples.
pub fn per_activity_eval(fold_results: &[FoldResult]) -> Result<Vec<ActivityRow>> {
    let mut groups: Vec<(RowKey, Vec<f64>, Vec<f64>)> = Vec::new();
    for fr in fold_results {
        for ((p, t), m) in fr.predictions.iter().zip(&fr.targets).zip(&fr.meta) {
            let key = if m.spans_transition {
                RowKey::Transition
            } else {
                RowKey::Condition(m.activity, m.condition)
            };
            match groups.iter_mut().find(|(k, _, _)| *k == key) {
                Some((_, ps, ts)) => {
                    ps.push(*p);
                    ts.push(*t);
                }
                None => groups.push((key, vec![*p], vec![*t])),
            }
        }
    }
    groups.sort_by(|a, b| row_key_order(&a.0).cmp(&row_key_order(&b.0)));

    let mut rows = Vec::new();
    for (key, ps, ts) in groups {
        let r = rmse(&ps, &ts)?;
        let mean_ee = math::mean(&ts);
        let n = nrmse(r, mean_ee).ok();
        rows.push(ActivityRow { key, n_samples: ps.len(), rmse: r, mean_ee, nrmse: n });
    }
    Ok(rows)
}

fn row_key_order(key: &RowKey) -> (u8, Activity, Condition) {
    match key {
        RowKey::Condition(a, c) => (0, *a, *c),
        RowKey::Transition => (1, Activity::Sit, Condition::Rest),
    }
}

/// Boxplot statistics: median, quartiles by linear interpolation, whiskers at
/// 1.5 x IQR clamped to observed values, explicit outliers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

/// Linear-interpolation quantile of a sorted slice.
pub fn quantile_linear(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Domain("boxplot statistics need at least one value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q25 = quantile_linear(&sorted, 0.25);
    let median = quantile_linear(&sorted, 0.5);
    let q75 = quantile_linear(&sorted, 0.75);
    let iqr = q75 - q25;
    let lo_fence = q25 - 1.5 * iqr;
    let hi_fence = q75 + 1.5 * iqr;
    let whisker_lo = sorted.iter().copied().find(|&v| v >= lo_fence).unwrap_or(sorted[0]);
    let whisker_hi = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= hi_fence)
        .unwrap_or(sorted[sorted.len() - 1]);
    let outliers = sorted.iter().copied().filter(|&v| v < lo_fence || v > hi_fence).collect();
    Ok(BoxStats { median, q25, q75, whisker_lo, whisker_hi, outliers })
}

/// Boxplot records over per-fold RMSE distributions, one per labelled group
/// (signal selection, model, ...).
pub fn per_subject_stats(groups: &[(String, Vec<f64>)]) -> Result<Vec<(String, BoxStats)>> {
    groups
        .iter()
        .map(|(label, values)| Ok((label.clone(), box_stats(values)?)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FoldFailure {
    pub test_subject: u32,
    pub error: String,
}

/// Aggregated experiment output.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub folds: Vec<FoldResult>,
    pub failed_folds: Vec<FoldFailure>,
    /// Mean of the per-fold RMSEs (not pooled over samples).
    pub overall_rmse: f64,
    pub per_activity: Vec<ActivityRow>,
    pub per_subject: BoxStats,
    /// Hash of the experiment inputs; identical configs hash identically.
    pub fingerprint: u64,
}

fn fnv64(bytes: impl Iterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic hash of the experiment inputs.
pub fn experiment_fingerprint(
    selection: &Selection,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    opts: &ExperimentOptions,
) -> u64 {
    let repr = format!(
        "{:?}|{:?}|{:?}|{:?}|{:?}",
        selection.channels(),
        spec,
        (cfg.epochs, cfg.batch_size, cfg.learning_rate, cfg.early_stop_patience, cfg.seed),
        cfg.validation_fraction.to_bits(),
        (opts.stride, opts.include_rest, opts.standardize),
    );
    fnv64(repr.bytes())
}

pub fn aggregate_report(
    mut folds: Vec<FoldResult>,
    failed_folds: Vec<FoldFailure>,
    fingerprint: u64,
) -> Result<MetricsReport> {
    if folds.is_empty() {
        return Err(Error::Protocol("no fold succeeded".into()));
    }
    folds.sort_by_key(|f| f.test_subject);
    let fold_rmses: Vec<f64> = folds.iter().map(|f| f.rmse).collect();
    let overall_rmse = math::mean(&fold_rmses);
    let per_activity = per_activity_eval(&folds)?;
    let per_subject = box_stats(&fold_rmses)?;
    Ok(MetricsReport { folds, failed_folds, overall_rmse, per_activity, per_subject, fingerprint })
}

/// Full leave-one-subject-out experiment: window, scale, train, and score one
/// fold per subject, then aggregate. Individual fold failures are recorded
/// and the remaining folds still aggregate.
pub fn run_loso_experiment(
    recordings: &[SubjectRecording],
    selection: &Selection,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    opts: &ExperimentOptions,
) -> Result<MetricsReport> {
    let ids: Vec<u32> = recordings.iter().map(|r| r.subject_id).collect();
    let folds = loso_folds(&ids)?;
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for fold in &folds {
        match run_fold(recordings, fold, selection, spec, cfg, opts) {
            Ok(r) => results.push(r),
            Err(e) => failures.push(FoldFailure {
                test_subject: fold.test_subject,
                error: e.to_string(),
            }),
        }
    }
    let fp = experiment_fingerprint(selection, spec, cfg, opts);
    aggregate_report(results, failures, fp)
}

// ── Pairwise sweep ───────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub a: ChannelId,
    pub b: ChannelId,
    pub family: ModelFamily,
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct BestPartnerRow {
    pub signal: ChannelId,
    pub partner: ChannelId,
    pub family: ModelFamily,
    pub rmse: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub best_partner: Vec<BestPartnerRow>,
    /// Cells sorted by descending RMSE.
    pub worst_pairs: Vec<SweepCell>,
}

/// Run one LOSO experiment per unordered signal pair and model spec. Cell
/// failures are recorded and the sweep continues.
pub fn pairwise_sweep(
    recordings: &[SubjectRecording],
    universe: &[ChannelId],
    specs: &[ModelSpec],
    cfg: &TrainConfig,
    opts: &ExperimentOptions,
) -> Result<SweepReport> {
    if universe.len() < 2 {
        return Err(Error::Config("pairwise sweep needs at least two signals".into()));
    }
    let mut cells = Vec::new();
    for i in 0..universe.len() {
        for j in i + 1..universe.len() {
            for spec in specs {
                let (a, b) = (universe[i], universe[j]);
                let cell = match Selection::from_channels(&[a, b]).and_then(|sel| {
                    run_loso_experiment(recordings, &sel, spec, cfg, opts)
                }) {
                    Ok(report) => SweepCell {
                        a,
                        b,
                        family: spec.family,
                        rmse: Some(report.overall_rmse),
                        error: None,
                    },
                    Err(e) => SweepCell {
                        a,
                        b,
                        family: spec.family,
                        rmse: None,
                        error: Some(e.to_string()),
                    },
                };
                cells.push(cell);
            }
        }
    }
    Ok(summarize_sweep(cells))
}

/// Best partner per signal (minute ventilation is not eligible as a partner,
/// except for the minute-ventilation row itself) and the worst pairs overall.
pub fn summarize_sweep(cells: Vec<SweepCell>) -> SweepReport {
    let mut signals: Vec<ChannelId> = Vec::new();
    for c in &cells {
        if !signals.contains(&c.a) {
            signals.push(c.a);
        }
        if !signals.contains(&c.b) {
            signals.push(c.b);
        }
    }
    signals.sort();

    let mut best_partner = Vec::new();
    for &s in &signals {
        let mut best: Option<BestPartnerRow> = None;
        for c in &cells {
            let partner = if c.a == s {
                c.b
            } else if c.b == s {
                c.a
            } else {
                continue;
            };
            if s != ChannelId::MinuteVentilation && partner == ChannelId::MinuteVentilation {
                continue;
            }
            if let Some(r) = c.rmse {
                if best.as_ref().map_or(true, |b| r < b.rmse) {
                    best = Some(BestPartnerRow { signal: s, partner, family: c.family, rmse: r });
                }
            }
        }
        if let Some(b) = best {
            best_partner.push(b);
        }
    }

    let mut worst: Vec<SweepCell> = cells.iter().filter(|c| c.rmse.is_some()).cloned().collect();
    worst.sort_by(|x, y| y.rmse.unwrap().total_cmp(&x.rmse.unwrap()));
    worst.truncate(16);

    SweepReport { cells, best_partner, worst_pairs: worst }
}
