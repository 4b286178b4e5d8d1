//! Report files: one CSV per table, a JSON summary embedding the config
//! fingerprint, and loss-curve exports. Output is deterministic for a fixed
//! config and seed.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use eebench_core::eval::{ActivityRow, BoxStats, MetricsReport, RowKey, SweepReport};
use eebench_core::model::ModelFamily;

use crate::config::ExperimentConfig;

/// Deterministic fingerprint over the config plus the core experiment hash,
/// rendered as hex. The output directory and worker count do not affect
/// results, so they are scrubbed before hashing: the same experiment gets the
/// same fingerprint wherever and however it runs.
pub fn fingerprint(config: &ExperimentConfig, core_fp: u64) -> String {
    let mut scrubbed = config.clone();
    scrubbed.out = std::path::PathBuf::new();
    scrubbed.jobs = 1;
    let repr = serde_json::to_string(&scrubbed).expect("config serializes");
    let mut h: u64 = 0xcbf29ce484222325;
    for b in repr.bytes().chain(core_fp.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

/// Metadata comment line so every table file carries its provenance.
pub fn meta_line(fingerprint: &str, seed: u64) -> String {
    format!("# fingerprint={fingerprint} seed={seed}\n")
}

/// One (signals, model) experiment in a run.
pub struct ComboResult {
    pub signals: String,
    pub family: ModelFamily,
    pub report: MetricsReport,
    pub reference_rmse: Option<f64>,
}

pub fn combo_slug(signals: &str, family: ModelFamily, seed: u64) -> String {
    let safe: String = signals
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{safe}__{family}__s{seed}")
}

pub fn write_overall_csv(
    path: &Path,
    combos: &[ComboResult],
    seed: u64,
    fingerprint: &str,
) -> Result<()> {
    let mut out =
        String::from("signals,model,seed,n_folds,n_failed,overall_rmse_wkg,reference_rmse_wkg,fingerprint\n");
    for c in combos {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.signals,
            c.family,
            seed,
            c.report.folds.len(),
            c.report.failed_folds.len(),
            fmt(c.report.overall_rmse),
            c.reference_rmse.map(fmt).unwrap_or_default(),
            fingerprint,
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn activity_row_fields(row: &ActivityRow) -> (String, String) {
    match row.key {
        RowKey::Condition(a, c) => (a.name().to_string(), c.label()),
        RowKey::Transition => ("transition".to_string(), String::new()),
    }
}

pub fn write_per_activity_csv(path: &Path, rows: &[ActivityRow], meta: &str) -> Result<()> {
    let mut out = String::from(meta);
    out.push_str("activity,condition,n_samples,rmse_wkg,mean_ee_wkg,nrmse\n");
    for row in rows {
        let (activity, condition) = activity_row_fields(row);
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            activity,
            condition,
            row.n_samples,
            fmt(row.rmse),
            fmt(row.mean_ee),
            row.nrmse.map(fmt).unwrap_or_else(|| "flagged".into()),
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_per_subject_csv(path: &Path, report: &MetricsReport, meta: &str) -> Result<()> {
    let mut out = String::from(meta);
    out.push_str("subject,rmse_wkg\n");
    for f in &report.folds {
        out.push_str(&format!("{},{}\n", f.test_subject, fmt(f.rmse)));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_box_stats_csv(path: &Path, rows: &[(String, BoxStats)], meta: &str) -> Result<()> {
    let mut out = String::from(meta);
    out.push_str("label,median,q25,q75,whisker_lo,whisker_hi,outliers\n");
    for (label, b) in rows {
        let outliers =
            b.outliers.iter().map(|v| fmt(*v)).collect::<Vec<_>>().join("|");
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            label,
            fmt(b.median),
            fmt(b.q25),
            fmt(b.q75),
            fmt(b.whisker_lo),
            fmt(b.whisker_hi),
            outliers,
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_curves_csv(path: &Path, train: &[f64], val: &[f64], meta: &str) -> Result<()> {
    let mut out = String::from(meta);
    out.push_str("epoch,train_loss,val_loss\n");
    for (e, (t, v)) in train.iter().zip(val).enumerate() {
        out.push_str(&format!("{e},{},{}\n", fmt(*t), fmt(*v)));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_sweep_csv(path: &Path, sweep: &SweepReport, meta: &str) -> Result<()> {
    let mut out = String::from(meta);
    out.push_str("signal_a,signal_b,model,rmse_wkg,error\n");
    for c in &sweep.cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.a,
            c.b,
            c.family,
            c.rmse.map(fmt).unwrap_or_default(),
            c.error.clone().unwrap_or_default().replace(',', ";"),
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_best_partner_csv(path: &Path, sweep: &SweepReport, meta: &str) -> Result<()> {
    let mut out = String::from(meta);
    out.push_str("signal,best_partner,model,rmse_wkg\n");
    for row in &sweep.best_partner {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.signal,
            row.partner,
            row.family,
            fmt(row.rmse)
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_worst_pairs_csv(path: &Path, sweep: &SweepReport, meta: &str) -> Result<()> {
    let mut out = String::from(meta);
    out.push_str("signal_a,signal_b,model,rmse_wkg\n");
    for c in &sweep.worst_pairs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.a,
            c.b,
            c.family,
            c.rmse.map(fmt).unwrap_or_default()
        ));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct SummaryCombo<'a> {
    signals: &'a str,
    model: String,
    overall_rmse_wkg: f64,
    fold_rmse_wkg: Vec<(u32, f64)>,
    failed_folds: Vec<(u32, String)>,
    reference_rmse_wkg: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    fingerprint: &'a str,
    config: &'a ExperimentConfig,
    combos: Vec<SummaryCombo<'a>>,
}

/// JSON summary embedding the config and fingerprint. Wall-clock numbers stay
/// out so reruns with one config are byte-identical.
pub fn write_summary_json(
    path: &Path,
    config: &ExperimentConfig,
    fingerprint: &str,
    combos: &[ComboResult],
) -> Result<()> {
    let summary = Summary {
        fingerprint,
        config,
        combos: combos
            .iter()
            .map(|c| SummaryCombo {
                signals: &c.signals,
                model: c.family.to_string(),
                overall_rmse_wkg: c.report.overall_rmse,
                fold_rmse_wkg: c.report.folds.iter().map(|f| (f.test_subject, f.rmse)).collect(),
                failed_folds: c
                    .report
                    .failed_folds
                    .iter()
                    .map(|f| (f.test_subject, f.error.clone()))
                    .collect(),
                reference_rmse_wkg: c.reference_rmse,
            })
            .collect(),
    };
    fs::write(path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let cfg = ExperimentConfig::default();
        let a = fingerprint(&cfg, 1);
        let b = fingerprint(&cfg, 1);
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        let c = fingerprint(&cfg, 2);
        assert_ne!(a, c);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 8;
        assert_ne!(a, fingerprint(&cfg2, 1));
    }

    #[test]
    fn combo_slug_is_filesystem_safe() {
        let slug = combo_slug("local+global-minute_ventilation", ModelFamily::Cnn, 7);
        assert!(slug.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        assert!(slug.contains("cnn"));
    }
}
