//! Subcommand implementations: `run`, `sweep`, `reproduce`, `gen-synth`,
//! `gradcheck`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use eebench_core::catalog::{self, ChannelId, Selection};
use eebench_core::dataset::{IngestOptions, SubjectRecording};
use eebench_core::eval::{
    aggregate_report, experiment_fingerprint, loso_folds, run_fold, summarize_sweep, BoxStats,
    ExperimentOptions, MetricsReport, RowKey, SweepCell, SweepReport,
};
use eebench_core::model::{build_model, ModelFamily, ModelSpec};
use eebench_core::nn::Mode;
use eebench_core::synth::{generate_raw, generate_subject, Protocol, SubjectProfile};
use eebench_core::tensor::Batch;
use eebench_core::train::{derive_seed, finite_difference_gradcheck, TrainConfig};

use crate::config::ExperimentConfig;
use crate::dataset_io;
use crate::plot;
use crate::reference::Reference;
use crate::report::{self, combo_slug, ComboResult};
use crate::{Outcome, UsageError};

#[derive(Parser, Debug)]
#[command(
    name = "eebench",
    about = "Benchmark harness for energy-expenditure regression from wearable biosignals",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run leave-one-subject-out experiments for signal selections x models.
    Run(RunArgs),
    /// Sweep all signal pairs in a universe across models.
    Sweep(SweepArgs),
    /// Re-create a published table or figure (real data, or --demo on synthetic data).
    Reproduce(ReproduceArgs),
    /// Generate a synthetic dataset tree on disk.
    GenSynth(GenSynthArgs),
    /// Finite-difference gradient check of every model family.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Dataset root directory, or `synthetic:<seed>`.
    #[arg(long, global = true)]
    pub data: Option<String>,
    /// Output directory for reports and plots.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed for splits, init, and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel fold workers.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// JSON config file; explicit flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Validation fraction held out from the training subjects.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Disable input standardization.
    #[arg(long)]
    pub no_standardize: bool,
    /// Drop sit/stand windows from training and evaluation.
    #[arg(long)]
    pub exclude_rest: bool,
    /// Use reduced-width model variants (fast, for demos and smoke tests).
    #[arg(long)]
    pub toy: bool,
    /// Synthetic data: number of subjects.
    #[arg(long)]
    pub subjects: Option<u32>,
    /// Synthetic data: protocol (full | short | demo).
    #[arg(long)]
    pub protocol: Option<String>,
    /// Synthetic data: per-sample EE noise sigma in W/kg.
    #[arg(long)]
    pub ee_noise: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated signal selections, e.g. `minute_ventilation,hexoskin`.
    #[arg(long)]
    pub signals: Option<String>,
    /// Comma-separated model families.
    #[arg(long)]
    pub models: Option<String>,
    /// Additionally train one model per combo on all subjects and save a
    /// weight checkpoint plus its training report.
    #[arg(long)]
    pub save_checkpoints: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// `all` or a comma-separated channel list.
    #[arg(long, default_value = "all")]
    pub universe: String,
    #[arg(long)]
    pub models: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// One of: table1, table2, fig2, fig3, fig4, tableS1.
    pub target: String,
    /// Run on synthetic data at reduced scale instead of the real dataset.
    #[arg(long)]
    pub demo: bool,
    #[arg(long)]
    pub models: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Comma-separated families; default all six.
    #[arg(long)]
    pub families: Option<String>,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Parameter coordinates sampled per family.
    #[arg(long, default_value_t = 48)]
    pub checks: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

// ── Config assembly ──────────────────────────────────────────────────────────

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

impl CommonArgs {
    /// Config file (when given) as the base, explicit flags on top.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path).map_err(|e| usage(format!("{e:#}")))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.data {
            cfg.data = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v.max(1);
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if self.batch_size.is_some() {
            cfg.batch_size = self.batch_size;
        }
        if self.learning_rate.is_some() {
            cfg.learning_rate = self.learning_rate;
        }
        if let Some(v) = self.patience {
            cfg.early_stop_patience = v;
        }
        if let Some(v) = self.val_fraction {
            if !(0.0..1.0).contains(&v) {
                return Err(usage(format!("val_fraction: {v} outside [0, 1)")));
            }
            cfg.validation_fraction = v;
        }
        if let Some(v) = self.stride {
            if v == 0 {
                return Err(usage("stride: must be at least 1"));
            }
            cfg.stride = v;
        }
        if self.no_standardize {
            cfg.standardize = false;
        }
        if self.exclude_rest {
            cfg.include_rest = false;
        }
        if let Some(v) = self.subjects {
            if v < 2 {
                return Err(usage("subjects: need at least 2 for leave-one-subject-out"));
            }
            cfg.subjects = v;
        }
        if let Some(v) = &self.protocol {
            cfg.protocol = v.clone();
        }
        if let Some(v) = self.ee_noise {
            cfg.ee_noise = v;
        }
        Ok(cfg)
    }
}

fn parse_protocol(name: &str) -> Result<Protocol> {
    match name {
        "full" => Ok(Protocol::full()),
        "short" => Ok(Protocol::short()),
        "demo" => Ok(Protocol::demo()),
        _ => Err(usage(format!("protocol: unknown '{name}' (expected full | short | demo)"))),
    }
}

fn parse_models(arg: Option<&str>, default: &[ModelFamily]) -> Result<Vec<ModelFamily>> {
    match arg {
        None => Ok(default.to_vec()),
        Some(list) if list == "all" => Ok(ModelFamily::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .map(|s| ModelFamily::parse(s.trim()).map_err(|e| usage(format!("models: {e}"))))
            .collect(),
    }
}

fn parse_selections(arg: &str) -> Result<Vec<Selection>> {
    arg.split(',')
        .map(|s| Selection::parse(s.trim()).map_err(|e| usage(format!("signals: {e}"))))
        .collect()
}

/// Load the configured dataset: a directory tree or seeded synthetic
/// subjects.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Vec<SubjectRecording>> {
    if let Some(rest) = cfg.data.strip_prefix("synthetic:") {
        let seed: u64 = rest
            .parse()
            .map_err(|_| usage(format!("data: bad synthetic seed '{rest}'")))?;
        let protocol = parse_protocol(&cfg.protocol)?;
        (1..=cfg.subjects)
            .map(|k| {
                let mut profile = SubjectProfile::seeded(k, seed);
                profile.ee_noise_sigma = cfg.ee_noise;
                generate_subject(&profile, &protocol).map_err(|e| anyhow!("{e}"))
            })
            .collect()
    } else {
        dataset_io::load_dataset(Path::new(&cfg.data), &IngestOptions::default())
    }
}

fn spec_for(family: ModelFamily, toy: bool) -> ModelSpec {
    if toy {
        ModelSpec::toy(family)
    } else {
        ModelSpec::standard(family)
    }
}

// ── Experiments with optional fold parallelism ───────────────────────────────

/// Core LOSO experiment with folds distributed over `jobs` threads. Fold
/// results are aggregated in subject order, so the outcome is independent of
/// scheduling.
pub fn run_experiment(
    recs: &[SubjectRecording],
    selection: &Selection,
    spec: &ModelSpec,
    tcfg: &TrainConfig,
    opts: &ExperimentOptions,
    jobs: usize,
) -> Result<MetricsReport> {
    let ids: Vec<u32> = recs.iter().map(|r| r.subject_id).collect();
    let folds = loso_folds(&ids).map_err(|e| anyhow!("{e}"))?;

    let mut results = Vec::new();
    let mut failures = Vec::new();
    if jobs <= 1 {
        for fold in &folds {
            match run_fold(recs, fold, selection, spec, tcfg, opts) {
                Ok(r) => results.push(r),
                Err(e) => failures.push(eebench_core::eval::FoldFailure {
                    test_subject: fold.test_subject,
                    error: e.to_string(),
                }),
            }
        }
    } else {
        let outcomes = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in folds.chunks(folds.len().div_ceil(jobs)) {
                handles.push(scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|fold| {
                            (
                                fold.test_subject,
                                run_fold(recs, fold, selection, spec, tcfg, opts),
                            )
                        })
                        .collect::<Vec<_>>()
                }));
            }
            handles.into_iter().flat_map(|h| h.join().expect("fold worker panicked")).collect::<Vec<_>>()
        });
        for (subject, outcome) in outcomes {
            match outcome {
                Ok(r) => results.push(r),
                Err(e) => failures.push(eebench_core::eval::FoldFailure {
                    test_subject: subject,
                    error: e.to_string(),
                }),
            }
        }
    }
    aggregate_report(results, failures, experiment_fingerprint(selection, spec, tcfg, opts))
        .map_err(|e| anyhow!("{e}"))
}

// ── run ──────────────────────────────────────────────────────────────────────

pub fn cmd_run(args: &RunArgs) -> Result<Outcome> {
    let mut cfg = args.common.resolve()?;
    if let Some(signals) = &args.signals {
        cfg.signals = signals.split(',').map(|s| s.trim().to_string()).collect();
    }
    if let Some(models) = &args.models {
        cfg.models = models.split(',').map(|s| s.trim().to_string()).collect();
    }
    let selections = parse_selections(&cfg.signals.join(","))?;
    let families: Vec<ModelFamily> = cfg
        .models
        .iter()
        .map(|m| ModelFamily::parse(m).map_err(|e| usage(format!("models: {e}"))))
        .collect::<Result<_>>()?;

    let recs = load_data(&cfg)?;
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let reference = Reference::load()?;
    let tcfg = cfg.train_config();
    let opts = cfg.experiment_options();

    let mut combos = Vec::new();
    let mut core_fp: u64 = 0;
    for selection in &selections {
        for &family in &families {
            let spec = spec_for(family, args.common.toy);
            eprintln!("run: signals={} model={family}", selection.label);
            let report = run_experiment(&recs, selection, &spec, &tcfg, &opts, cfg.jobs)?;
            core_fp ^= report.fingerprint.rotate_left((combos.len() % 63) as u32);
            if args.save_checkpoints {
                save_final_model(&cfg, &recs, selection, &spec, &tcfg, &opts, family)?;
            }
            combos.push(ComboResult {
                signals: selection.label.clone(),
                family,
                reference_rmse: reference.table1(&selection.label, family.name()),
                report,
            });
        }
    }

    let fp = report::fingerprint(&cfg, core_fp);
    let meta = report::meta_line(&fp, cfg.seed);
    report::write_overall_csv(&cfg.out.join("overall.csv"), &combos, cfg.seed, &fp)?;
    report::write_summary_json(&cfg.out.join("summary.json"), &cfg, &fp, &combos)?;

    let mut box_rows: Vec<(String, Vec<f64>)> = Vec::new();
    for c in &combos {
        let slug = combo_slug(&c.signals, c.family, cfg.seed);
        report::write_per_activity_csv(
            &cfg.out.join(format!("per_activity__{slug}.csv")),
            &c.report.per_activity,
            &meta,
        )?;
        report::write_per_subject_csv(
            &cfg.out.join(format!("per_subject__{slug}.csv")),
            &c.report,
            &meta,
        )?;
        for fold in &c.report.folds {
            report::write_curves_csv(
                &cfg.out.join(format!("curves__{slug}__fold{}.csv", fold.test_subject)),
                &fold.train_report.train_curve,
                &fold.train_report.val_curve,
                &meta,
            )?;
        }
        box_rows.push((
            format!("{} / {}", c.signals, c.family),
            c.report.folds.iter().map(|f| f.rmse).collect::<Vec<f64>>(),
        ));
    }
    let box_rows = eebench_core::eval::per_subject_stats(&box_rows).map_err(|e| anyhow!("{e}"))?;
    report::write_box_stats_csv(&cfg.out.join("per_subject_boxstats.csv"), &box_rows, &meta)?;
    plot::boxplot(
        &cfg.out.join("per_subject_boxplot.svg"),
        "Per-subject RMSE across folds (W/kg)",
        &box_rows,
    )?;
    write_per_activity_scatter(&cfg.out.join("per_activity_scatter.svg"), &combos)?;

    let partial = combos.iter().any(|c| !c.report.failed_folds.is_empty());
    Ok(if partial { Outcome::Partial } else { Outcome::Success })
}

/// Fit one deployable model on every subject's data and save the checkpoint
/// with its training report next to it.
fn save_final_model(
    cfg: &ExperimentConfig,
    recs: &[SubjectRecording],
    selection: &Selection,
    spec: &ModelSpec,
    tcfg: &TrainConfig,
    opts: &ExperimentOptions,
    family: ModelFamily,
) -> Result<()> {
    use eebench_core::train::{split_train_validation, train};
    use eebench_core::windowing::{apply_scaler, fit_scaler};

    let refs: Vec<&SubjectRecording> = recs.iter().collect();
    let mut ds = eebench_core::windowing::WindowedDataset::from_recordings(
        &refs,
        selection,
        spec.window_len,
        opts.stride,
    )
    .map_err(|e| anyhow!("{e}"))?;
    let all: Vec<usize> = (0..ds.len()).collect();
    if opts.standardize {
        let scaler = fit_scaler(&ds, &all).map_err(|e| anyhow!("{e}"))?;
        apply_scaler(&scaler, &mut ds).map_err(|e| anyhow!("{e}"))?;
    }
    let (train_idx, val_idx) =
        split_train_validation(&ds, tcfg.validation_fraction, derive_seed(tcfg.seed, 0xf17a1))
            .map_err(|e| anyhow!("{e}"))?;
    let mut model = build_model(spec, selection.len(), spec.window_len, derive_seed(tcfg.seed, 0xf1))
        .map_err(|e| anyhow!("{e}"))?;
    let report =
        train(&mut model, &ds, &train_idx, &val_idx, tcfg).map_err(|e| anyhow!("{e}"))?;

    let slug = combo_slug(&selection.label, family, tcfg.seed);
    crate::checkpoint::save_checkpoint(&cfg.out.join(format!("model__{slug}.ckpt")), &mut model)?;
    fs::write(
        cfg.out.join(format!("train_report__{slug}.json")),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(())
}

fn write_per_activity_scatter(path: &Path, combos: &[ComboResult]) -> Result<()> {
    // Shared category axis over all (activity, condition) rows seen.
    let mut labels: Vec<String> = Vec::new();
    for c in combos {
        for row in &c.report.per_activity {
            if let RowKey::Condition(a, cond) = row.key {
                let label = format!("{} {}", a.name(), cond.label());
                if !labels.contains(&label) {
                    labels.push(label);
                }
            }
        }
    }
    let mut series = Vec::new();
    for c in combos {
        let mut points = Vec::new();
        for row in &c.report.per_activity {
            if let RowKey::Condition(a, cond) = row.key {
                let label = format!("{} {}", a.name(), cond.label());
                let xi = labels.iter().position(|l| *l == label).unwrap();
                points.push((xi, row.rmse));
            }
        }
        series.push(plot::Series { label: format!("{} / {}", c.signals, c.family), points });
    }
    plot::scatter(path, "Per-activity RMSE (W/kg)", &labels, &series, "RMSE (W/kg)")
}

// ── sweep ────────────────────────────────────────────────────────────────────

pub fn cmd_sweep(args: &SweepArgs) -> Result<Outcome> {
    let cfg = args.common.resolve()?;
    let universe: Vec<ChannelId> = if args.universe == "all" {
        catalog::input_channels()
    } else {
        args.universe
            .split(',')
            .map(|s| ChannelId::parse(s.trim()).map_err(|e| usage(format!("universe: {e}"))))
            .collect::<Result<_>>()?
    };
    if universe.len() < 2 {
        return Err(usage("universe: need at least two signals"));
    }
    let families = parse_models(args.models.as_deref(), &[ModelFamily::LinReg])?;
    let specs: Vec<ModelSpec> =
        families.iter().map(|&f| spec_for(f, args.common.toy)).collect();

    let mut cfg = cfg;
    cfg.signals = universe.iter().map(|c| c.name().to_string()).collect();
    cfg.models = families.iter().map(|f| f.to_string()).collect();
    let recs = load_data(&cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let tcfg = cfg.train_config();
    let opts = cfg.experiment_options();

    let mut pairs = Vec::new();
    for i in 0..universe.len() {
        for j in i + 1..universe.len() {
            for spec in &specs {
                pairs.push((universe[i], universe[j], spec.clone()));
            }
        }
    }
    eprintln!("sweep: {} cells over {} subjects", pairs.len(), recs.len());

    let cells: Vec<SweepCell> = if cfg.jobs <= 1 {
        pairs.iter().map(|(a, b, spec)| sweep_cell(&recs, *a, *b, spec, &tcfg, &opts)).collect()
    } else {
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for chunk in pairs.chunks(pairs.len().div_ceil(cfg.jobs)) {
                let recs = &recs;
                let tcfg = &tcfg;
                let opts = &opts;
                handles.push(scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|(a, b, spec)| sweep_cell(recs, *a, *b, spec, tcfg, opts))
                        .collect::<Vec<_>>()
                }));
            }
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        })
    };
    let sweep = summarize_sweep(cells);
    let fp = report::fingerprint(&cfg, fnv_str("sweep"));
    let meta = report::meta_line(&fp, cfg.seed);
    write_sweep_outputs(&cfg.out, &sweep, &families, &meta)?;

    let partial = sweep.cells.iter().any(|c| c.error.is_some());
    Ok(if partial { Outcome::Partial } else { Outcome::Success })
}

fn fnv_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn sweep_cell(
    recs: &[SubjectRecording],
    a: ChannelId,
    b: ChannelId,
    spec: &ModelSpec,
    tcfg: &TrainConfig,
    opts: &ExperimentOptions,
) -> SweepCell {
    let run = || -> Result<f64, eebench_core::Error> {
        let sel = Selection::from_channels(&[a, b])?;
        let ids: Vec<u32> = recs.iter().map(|r| r.subject_id).collect();
        let folds = loso_folds(&ids)?;
        let mut results = Vec::new();
        for fold in &folds {
            results.push(run_fold(recs, fold, &sel, spec, tcfg, opts)?);
        }
        let report = aggregate_report(
            results,
            vec![],
            experiment_fingerprint(&sel, spec, tcfg, opts),
        )?;
        Ok(report.overall_rmse)
    };
    match run() {
        Ok(rmse) => SweepCell { a, b, family: spec.family, rmse: Some(rmse), error: None },
        Err(e) => {
            SweepCell { a, b, family: spec.family, rmse: None, error: Some(e.to_string()) }
        }
    }
}

fn write_sweep_outputs(
    out: &Path,
    sweep: &SweepReport,
    families: &[ModelFamily],
    meta: &str,
) -> Result<()> {
    report::write_sweep_csv(&out.join("sweep.csv"), sweep, meta)?;
    report::write_best_partner_csv(&out.join("best_partner.csv"), sweep, meta)?;
    report::write_worst_pairs_csv(&out.join("worst_pairs.csv"), sweep, meta)?;

    // Heatmap: one row per pair, one column per model.
    let mut row_keys: Vec<(ChannelId, ChannelId)> = Vec::new();
    for c in &sweep.cells {
        if !row_keys.contains(&(c.a, c.b)) {
            row_keys.push((c.a, c.b));
        }
    }
    let row_labels: Vec<String> =
        row_keys.iter().map(|(a, b)| format!("{a}+{b}")).collect();
    let col_labels: Vec<String> = families.iter().map(|f| f.to_string()).collect();
    let mut values = vec![None; row_keys.len() * families.len()];
    for c in &sweep.cells {
        let ri = row_keys.iter().position(|k| *k == (c.a, c.b)).unwrap();
        let ci = families.iter().position(|f| *f == c.family).unwrap();
        values[ri * families.len() + ci] = c.rmse;
    }
    plot::heatmap(
        &out.join("sweep_heatmap.svg"),
        "Pairwise RMSE (W/kg)",
        &row_labels,
        &col_labels,
        &values,
    )
}

// ── reproduce ────────────────────────────────────────────────────────────────

pub fn cmd_reproduce(args: &ReproduceArgs) -> Result<Outcome> {
    let target = args.target.as_str();
    let known = ["table1", "table2", "fig2", "fig3", "fig4", "tableS1"];
    if !known.contains(&target) {
        return Err(usage(format!(
            "reproduce: unknown target '{target}' (expected one of {})",
            known.join(", ")
        )));
    }

    let mut cfg = args.common.resolve()?;
    let synthetic = cfg.data.starts_with("synthetic:");
    if !args.demo && synthetic {
        return Err(usage(format!(
            "reproduce {target} needs the real dataset (--data <dir>); \
             pass --demo to run a reduced synthetic demonstration instead"
        )));
    }
    if args.demo {
        // Reduced scale: all 21 conditions at 3.5-minute segments, narrow
        // models, few epochs. Structure over accuracy.
        if args.common.protocol.is_none() {
            cfg.protocol = "demo".into();
        }
        if args.common.epochs.is_none() {
            cfg.epochs = 6;
        }
        if args.common.stride.is_none() {
            cfg.stride = 2;
        }
        if args.common.ee_noise.is_none() {
            cfg.ee_noise = 0.2;
        }
    }
    let toy = args.demo || args.common.toy;

    let recs = load_data(&cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let reference = Reference::load()?;
    let fp = report::fingerprint(&cfg, fnv_str(&format!("{target}|{:?}", args.models)));
    let meta = report::meta_line(&fp, cfg.seed);
    let tcfg = cfg.train_config();
    let opts = cfg.experiment_options();
    let run_sel = |expr: &str, family: ModelFamily| -> Result<MetricsReport> {
        let sel = Selection::parse(expr).map_err(|e| usage(format!("signals: {e}")))?;
        eprintln!("reproduce {target}: signals={expr} model={family}");
        run_experiment(&recs, &sel, &spec_for(family, toy), &tcfg, &opts, cfg.jobs)
    };

    match target {
        "table1" => {
            let families = parse_models(args.models.as_deref(), &[ModelFamily::LinReg])?;
            let mut selections: Vec<String> =
                catalog::input_channels().iter().map(|c| c.name().to_string()).collect();
            selections.extend(
                [
                    "global",
                    "global-minute_ventilation",
                    "local",
                    "local+global",
                    "local+global-minute_ventilation",
                    "hexoskin",
                    "vo2",
                ]
                .map(String::from),
            );
            let mut out = String::from(&meta);
            out.push_str("signals");
            for f in &families {
                out.push_str(&format!(",{f}_ours,{f}_reference"));
            }
            out.push_str(",prior_linreg_reference\n");
            let mut partial = false;
            for sel in &selections {
                out.push_str(sel);
                for &family in &families {
                    match run_sel(sel, family) {
                        Ok(r) => {
                            partial |= !r.failed_folds.is_empty();
                            out.push_str(&format!(",{:.6}", r.overall_rmse));
                        }
                        Err(e) => {
                            eprintln!("table1 cell ({sel}, {family}) failed: {e}");
                            partial = true;
                            out.push(',');
                        }
                    }
                    let r = reference
                        .table1(sel, family.name())
                        .map(|v| format!("{v:.2}"))
                        .unwrap_or_default();
                    out.push_str(&format!(",{r}"));
                }
                let prior = reference
                    .table1(sel, "prior_linreg")
                    .map(|v| format!("{v:.2}"))
                    .unwrap_or_default();
                out.push_str(&format!(",{prior}\n"));
            }
            fs::write(cfg.out.join("table1.csv"), out)?;
            return Ok(if partial { Outcome::Partial } else { Outcome::Success });
        }
        "table2" => {
            let families = parse_models(args.models.as_deref(), &[ModelFamily::LinReg])?;
            let family = families[0];
            let single = run_sel("minute_ventilation", family)?;
            let group = run_sel("hexoskin", family)?;
            let mut out = String::from(&meta);
            out.push_str(
                "activity,condition,nrmse_single_ours,single_signal,nrmse_single_reference,\
                 reference_single_signal,nrmse_group_ours,group,nrmse_group_reference,reference_group\n",
            );
            let mut rows = 0usize;
            for row in &single.per_activity {
                let RowKey::Condition(act, cond) = row.key else { continue };
                if matches!(act, catalog::Activity::Sit | catalog::Activity::Stand) {
                    continue;
                }
                let group_row = group.per_activity.iter().find(|r| r.key == row.key);
                let (ref_single, ref_group) = reference.table2(act.name(), &cond.label());
                let fmt_opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},minute_ventilation,{},{},{},hexoskin,{},{}\n",
                    act.name(),
                    cond.label(),
                    fmt_opt(row.nrmse),
                    ref_single.as_ref().map(|(_, v)| format!("{v:.2}")).unwrap_or_default(),
                    ref_single.as_ref().map(|(s, _)| s.clone()).unwrap_or_default(),
                    fmt_opt(group_row.and_then(|r| r.nrmse)),
                    ref_group.as_ref().map(|(_, v)| format!("{v:.2}")).unwrap_or_default(),
                    ref_group.as_ref().map(|(s, _)| s.clone()).unwrap_or_default(),
                ));
                rows += 1;
            }
            fs::write(cfg.out.join("table2.csv"), out)?;
            eprintln!("table2: {rows} condition rows");
        }
        "fig2" => {
            let families =
                parse_models(args.models.as_deref(), &[ModelFamily::LinReg, ModelFamily::Cnn])?;
            let partners: Vec<ChannelId> = catalog::input_channels()
                .into_iter()
                .filter(|&c| c != ChannelId::MinuteVentilation)
                .collect();
            let mut row_labels = vec!["minute_ventilation".to_string()];
            row_labels.extend(partners.iter().map(|p| format!("+{p}")));
            let col_labels: Vec<String> = families.iter().map(|f| f.to_string()).collect();
            let mut values = vec![None; row_labels.len() * families.len()];
            let mut csv = String::from(&meta);
            csv.push_str("secondary_signal,model,rmse_wkg\n");
            for (ci, &family) in families.iter().enumerate() {
                if let Ok(r) = run_sel("minute_ventilation", family) {
                    values[ci] = Some(r.overall_rmse);
                    csv.push_str(&format!(",{family},{:.6}\n", r.overall_rmse));
                }
                for (pi, &p) in partners.iter().enumerate() {
                    let expr = format!("minute_ventilation+{p}");
                    match run_sel(&expr, family) {
                        Ok(r) => {
                            values[(pi + 1) * families.len() + ci] = Some(r.overall_rmse);
                            csv.push_str(&format!("{p},{family},{:.6}\n", r.overall_rmse));
                        }
                        Err(e) => eprintln!("fig2 cell ({p}, {family}) failed: {e}"),
                    }
                }
            }
            fs::write(cfg.out.join("fig2.csv"), csv)?;
            plot::heatmap(
                &cfg.out.join("fig2.svg"),
                "RMSE with minute ventilation alone and paired (W/kg)",
                &row_labels,
                &col_labels,
                &values,
            )?;
        }
        "fig3" => {
            let families =
                parse_models(args.models.as_deref(), &[ModelFamily::LinReg, ModelFamily::Cnn])?;
            let candidates = [
                ChannelId::HeartRate,
                ChannelId::LeftAnkleAcc,
                ChannelId::RightAnkleAcc,
                ChannelId::EmgMagLeft,
                ChannelId::EmgMagRight,
            ];
            let mut csv = String::from(&meta);
            csv.push_str("kind,signals,model,rmse_wkg\n");
            let labels: Vec<String> = candidates.iter().map(|c| c.to_string()).collect();
            let mut single_series = Vec::new();
            let mut pair_series = Vec::new();
            for &family in &families {
                let mut singles = Vec::new();
                let mut pairs = Vec::new();
                for (xi, &c) in candidates.iter().enumerate() {
                    if let Ok(r) = run_sel(c.name(), family) {
                        csv.push_str(&format!("single,{c},{family},{:.6}\n", r.overall_rmse));
                        singles.push((xi, r.overall_rmse));
                    }
                    // Best pair within the candidate set for this signal.
                    let mut best: Option<(ChannelId, f64)> = None;
                    for &p in &candidates {
                        if p == c {
                            continue;
                        }
                        let expr = format!("{c}+{p}");
                        if let Ok(r) = run_sel(&expr, family) {
                            if best.map_or(true, |(_, b)| r.overall_rmse < b) {
                                best = Some((p, r.overall_rmse));
                            }
                        }
                    }
                    if let Some((p, rmse)) = best {
                        csv.push_str(&format!("pair,{c}+{p},{family},{rmse:.6}\n"));
                        pairs.push((xi, rmse));
                    }
                }
                single_series.push(plot::Series { label: format!("{family} single"), points: singles });
                pair_series.push(plot::Series { label: format!("{family} best pair"), points: pairs });
            }
            fs::write(cfg.out.join("fig3.csv"), csv)?;
            let mut series = pair_series;
            series.extend(single_series);
            plot::scatter(
                &cfg.out.join("fig3.svg"),
                "Alternatives to minute ventilation: singles vs best pairs",
                &labels,
                &series,
                "RMSE (W/kg)",
            )?;
        }
        "fig4" => {
            let families =
                parse_models(args.models.as_deref(), &[ModelFamily::Cnn, ModelFamily::Transformer])?;
            let selections = [
                "minute_ventilation",
                "heart_rate",
                "chest_acc",
                "l_ankle_acc",
                "hexoskin",
                "global",
                "local+global",
            ];
            let mut rows: Vec<(String, BoxStats)> = Vec::new();
            let mut csv = String::from(&meta);
            csv.push_str("signals,model,median,q25,q75,whisker_lo,whisker_hi,outliers\n");
            for &family in &families {
                for sel in selections {
                    match run_sel(sel, family) {
                        Ok(r) => {
                            let b = &r.per_subject;
                            let outliers = b
                                .outliers
                                .iter()
                                .map(|v| format!("{v:.6}"))
                                .collect::<Vec<_>>()
                                .join("|");
                            csv.push_str(&format!(
                                "{sel},{family},{:.6},{:.6},{:.6},{:.6},{:.6},{outliers}\n",
                                b.median, b.q25, b.q75, b.whisker_lo, b.whisker_hi
                            ));
                            rows.push((format!("{sel} / {family}"), r.per_subject.clone()));
                        }
                        Err(e) => eprintln!("fig4 cell ({sel}, {family}) failed: {e}"),
                    }
                }
            }
            fs::write(cfg.out.join("fig4.csv"), csv)?;
            plot::boxplot(
                &cfg.out.join("fig4.svg"),
                "Per-subject RMSE distributions (W/kg)",
                &rows,
            )?;
        }
        "tableS1" => {
            let families =
                parse_models(args.models.as_deref(), &[ModelFamily::LinReg, ModelFamily::Cnn])?;
            let universe: Vec<ChannelId> = if args.demo {
                vec![
                    ChannelId::MinuteVentilation,
                    ChannelId::HeartRate,
                    ChannelId::RightAnkleAcc,
                    ChannelId::EmgMagLeft,
                    ChannelId::LeftWristEda,
                    ChannelId::LeftWristTemp,
                ]
            } else {
                catalog::input_channels()
            };
            let specs: Vec<ModelSpec> = families.iter().map(|&f| spec_for(f, toy)).collect();
            let mut cells = Vec::new();
            for i in 0..universe.len() {
                for j in i + 1..universe.len() {
                    for spec in &specs {
                        cells.push(sweep_cell(&recs, universe[i], universe[j], spec, &tcfg, &opts));
                    }
                }
            }
            let sweep = summarize_sweep(cells);
            // Best-partner table with published columns joined.
            let mut best = String::from(&meta);
            best.push_str(
                "signal,best_partner,model,rmse_wkg,reference_partner,reference_model,reference_rmse\n",
            );
            for row in &sweep.best_partner {
                let (rp, rm, rv) = reference
                    .best_pair(row.signal.name())
                    .map(|(p, m, v)| (p, m, format!("{v:.2}")))
                    .unwrap_or_default();
                best.push_str(&format!(
                    "{},{},{},{:.6},{rp},{rm},{rv}\n",
                    row.signal, row.partner, row.family, row.rmse
                ));
            }
            fs::write(cfg.out.join("tableS1_best_pairs.csv"), best)?;

            let mut worst = String::from(&meta);
            worst.push_str("signal_a,signal_b,model,rmse_wkg\n");
            for c in &sweep.worst_pairs {
                worst.push_str(&format!(
                    "{},{},{},{:.6}\n",
                    c.a,
                    c.b,
                    c.family,
                    c.rmse.unwrap_or(f64::NAN)
                ));
            }
            fs::write(cfg.out.join("tableS1_worst_pairs.csv"), worst)?;
            report::write_sweep_csv(&cfg.out.join("tableS1_sweep.csv"), &sweep, &meta)?;
            let partial = sweep.cells.iter().any(|c| c.error.is_some());
            return Ok(if partial { Outcome::Partial } else { Outcome::Success });
        }
        _ => unreachable!(),
    }
    Ok(Outcome::Success)
}

// ── gen-synth ────────────────────────────────────────────────────────────────

pub fn cmd_gen_synth(args: &GenSynthArgs) -> Result<Outcome> {
    let cfg = args.common.resolve()?;
    // `--data synthetic:<s>` wins when given explicitly, else `--seed`.
    let seed = match args.common.data.as_deref().and_then(|d| d.strip_prefix("synthetic:")) {
        Some(rest) => rest
            .parse::<u64>()
            .map_err(|_| usage(format!("data: bad synthetic seed '{rest}'")))?,
        None => cfg.seed,
    };
    let protocol = parse_protocol(&cfg.protocol)?;
    let raws: Vec<_> = (1..=cfg.subjects)
        .map(|k| {
            let mut profile = SubjectProfile::seeded(k, seed);
            profile.ee_noise_sigma = cfg.ee_noise;
            generate_raw(&profile, &protocol).map_err(|e| anyhow!("{e}"))
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(&cfg.out)?;
    dataset_io::write_dataset(&cfg.out, &raws)?;
    println!(
        "wrote {} synthetic subjects (seed {seed}, protocol {}) to {}",
        cfg.subjects,
        cfg.protocol,
        cfg.out.display()
    );
    Ok(Outcome::Success)
}

// ── gradcheck ────────────────────────────────────────────────────────────────

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<Outcome> {
    let families = parse_models(args.families.as_deref(), &ModelFamily::ALL)?;
    let seed = args.seed.unwrap_or(17);
    let mut all_ok = true;
    println!("family              max_rel_error  checked  kinks_skipped  threshold  status");
    for family in families {
        let spec = ModelSpec::toy(family);
        let mut model = build_model(&spec, 2, spec.window_len, derive_seed(seed, 1))
            .map_err(|e| anyhow!("{e}"))?;
        let mut batch = Batch::zeros(3, spec.window_len, 2);
        let mut state = derive_seed(seed, 2);
        let mut next = || {
            // splitmix-style stream for the probe batch.
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for v in batch.data.iter_mut() {
            *v = next();
        }
        let targets: Vec<f64> = (0..3).map(|_| next()).collect();
        let _ = model.forward(&batch, Mode::Eval).map_err(|e| anyhow!("{e}"))?;
        let report =
            finite_difference_gradcheck(&mut model, &batch, &targets, args.eps, args.checks, seed)
                .map_err(|e| anyhow!("{e}"))?;
        let threshold = if family == ModelFamily::LinReg { 1e-8 } else { 1e-3 };
        let ok = report.max_rel_error < threshold && report.checked > 0;
        all_ok &= ok;
        println!(
            "{:<18}  {:>13.3e}  {:>7}  {:>13}  {:>9.0e}  {}",
            family.to_string(),
            report.max_rel_error,
            report.checked,
            report.skipped_kinks,
            threshold,
            if ok { "pass" } else { "FAIL" }
        );
    }
    Ok(if all_ok { Outcome::Success } else { Outcome::Partial })
}
