//! `pai`: synthesize data, train and score single runs, and run the
//! protocol-comparison and sweep experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pai_core::data::{apply_normalization, compute_norm_stats, load_dataset, split_stratified, synthesize, write_csv};
use pai_core::experiments::{emit_report, regenerate, run_compare_protocols, run_sweep, ReportFormat};
use pai_core::fsutil::write_atomic;
use pai_core::gradcheck::{run_gradcheck, InstanceLimits, DEFAULT_EPS, DEFAULT_TOLERANCE};
use pai_core::metrics::{classification_metrics, regression_metrics};
use pai_core::training::{load_run, predict, save_run, train};
use pai_core::{ArchConfig, Error, ExperimentConfig, ExperimentReport, GenConfig, HeadKind, Task};

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "pai", version, about = "Prompt pseudo-imputation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as data/labels CSV files.
    Synthesize {
        /// Generator settings (JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one run (first backbone, protocol and seed of the config).
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Score a dataset with a saved run.
    Predict {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare protocols for every backbone and seed.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Run the config's sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        output: Output,
    },
    /// Finite-difference check of every gradient in the training pipeline.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
        /// Writes gradcheck.json here when given.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit a saved report, optionally re-running it from its manifest.
    Report {
        /// A report.json written by `compare` or `sweep`.
        #[arg(long)]
        report: PathBuf,
        /// Re-run the experiment and fail unless every metric matches.
        #[arg(long)]
        regenerate: bool,
        /// Defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config's seeds (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct Output {
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Report formats (repeatable or comma separated).
    #[arg(long = "format", value_delimiter = ',', default_values = ["json", "csv", "figure-data"])]
    formats: Vec<ReportFormat>,
}

impl Common {
    fn load(&self) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        let out = match (&self.out, &cfg.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) if o.is_relative() => self.config.parent().unwrap_or(Path::new("")).join(o),
            (None, Some(o)) => o.clone(),
            (None, None) => return Err(Error::Config("no output directory: pass --out or set output_dir".into()).into()),
        };
        cfg.validate()?;
        Ok((cfg, out))
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn synthesize_cmd(config: Option<&Path>, out: &Path, seed: Option<u64>) -> anyhow::Result<u8> {
    let mut g = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<GenConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => GenConfig::default(),
    };
    if let Some(s) = seed {
        g.seed = s;
    }
    g.validate().map_err(|e| Error::Config(e.to_string()))?;
    let ds = synthesize(&g)?;
    create_dir(out)?;
    write_csv(&ds, &out.join("data.csv"), &out.join("labels.csv"))?;
    write_atomic(&out.join("generator.json"), serde_json::to_string_pretty(&g)?.as_bytes())?;
    info!("{} records, missing rate {:.4}", ds.len(), ds.missing_rate());
    Ok(0)
}

fn metrics_json(task: Task, labels: &[f64], scores: &[f64]) -> anyhow::Result<serde_json::Value> {
    Ok(match task {
        Task::Classification => {
            let m = classification_metrics(labels, scores)?;
            serde_json::json!({ "auroc": m.auroc, "auprc": m.auprc, "min_pse": m.min_pse })
        }
        Task::Regression => {
            let m = regression_metrics(labels, scores)?;
            serde_json::json!({ "mse": m.mse, "rmse": m.rmse, "mae": m.mae })
        }
    })
}

fn train_cmd(common: &Common) -> anyhow::Result<u8> {
    let (cfg, out) = common.load()?;
    if cfg.backbones.len() > 1 || cfg.protocols.len() > 1 || cfg.seeds.len() > 1 {
        warn!("train uses only the first backbone, protocol and seed");
    }
    let seed = cfg.seeds[0];
    let source = cfg.dataset.load()?;
    let (tr, va, te) = split_stratified(&source, cfg.split, seed)?;
    let stats = compute_norm_stats(&tr);
    let (tr, va, te) = (
        apply_normalization(&tr, &stats)?,
        apply_normalization(&va, &stats)?,
        apply_normalization(&te, &stats)?,
    );
    let task = cfg.dataset.task();
    let arch = ArchConfig {
        backbone: cfg.backbones[0],
        layers: cfg.layers,
        hidden_dim: cfg.hidden_dim,
        head: HeadKind::for_task(task),
        input_dim: tr.feature_count(),
    };
    let tc = pai_core::TrainConfig {
        protocol: cfg.protocols[0],
        seed,
        ..cfg.train.clone()
    };
    let mut run = train(&tr, &va, &arch, &tc)?;
    run.manifest.norm = Some(stats);
    create_dir(&out)?;
    save_run(&run, &out)?;
    let scores = predict(&run, &te)?;
    let metrics = metrics_json(task, &te.labels(), &scores)?;
    write_atomic(&out.join("test_metrics.json"), serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    println!("{metrics}");
    Ok(0)
}

fn predict_cmd(run_dir: &Path, data: &Path, labels: &Path, out: &Path) -> anyhow::Result<u8> {
    let run = load_run(run_dir)?;
    let task = run.model.arch().head.task();
    let mut ds = load_dataset(data, labels, task)?;
    if let Some(stats) = &run.manifest.norm {
        ds = apply_normalization(&ds, stats)?;
    }
    let scores = predict(&run, &ds)?;
    create_dir(out)?;
    let mut csv = String::from("id,label,score\n");
    for (r, s) in ds.records().iter().zip(&scores) {
        csv.push_str(&format!("{},{},{}\n", r.id(), r.label(), s));
    }
    write_atomic(&out.join("predictions.csv"), csv.as_bytes())?;
    match metrics_json(task, &ds.labels(), &scores) {
        Ok(m) => println!("{m}"),
        Err(e) => warn!("metrics unavailable: {e}"),
    }
    Ok(0)
}

fn finish_report(report: &ExperimentReport, output: &Output, out: &Path) -> anyhow::Result<u8> {
    create_dir(out)?;
    for p in emit_report(report, &output.formats, out)? {
        info!("wrote {}", p.display());
    }
    if !report.fairness.consistent {
        warn!("split or mask hashes differ across protocols");
    }
    let failures = report.failures();
    if failures > 0 {
        warn!("{failures} of {} runs failed", report.rows.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn experiment_cmd(common: &Common, output: &Output, sweep: bool) -> anyhow::Result<u8> {
    let (cfg, out) = common.load()?;
    let report = if sweep {
        run_sweep(&cfg, output.workers)?
    } else {
        run_compare_protocols(&cfg, output.workers)?
    };
    finish_report(&report, output, &out)
}

fn gradcheck_cmd(instances: usize, seed: u64, tolerance: f64, out: Option<&Path>) -> anyhow::Result<u8> {
    let report = run_gradcheck(instances, seed, InstanceLimits::default(), DEFAULT_EPS, tolerance)?;
    println!(
        "{} cases, max relative error {:.3e} (tolerance {:.0e}): {}",
        report.cases.len(),
        report.max_rel_error,
        tolerance,
        if report.passed { "ok" } else { "FAILED" }
    );
    if let Some(dir) = out {
        create_dir(dir)?;
        write_atomic(&dir.join("gradcheck.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(if report.passed { 0 } else { EXIT_PARTIAL })
}

fn report_cmd(path: &Path, rerun: bool, output: &Output, out: &Path) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let saved = ExperimentReport::from_json(&text).with_context(|| format!("reading {}", path.display()))?;
    let report = if rerun {
        let fresh = regenerate(&saved, output.workers)?;
        if fresh.metric_table() != saved.metric_table() {
            bail!("regenerated metrics differ from {}", path.display());
        }
        info!("regenerated {} rows; all metrics match", fresh.rows.len());
        fresh
    } else {
        saved
    };
    finish_report(&report, output, out)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. } => EXIT_IO,
                _ => EXIT_CONFIG,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_CONFIG
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synthesize { config, out, seed } => synthesize_cmd(config.as_deref(), out, *seed),
        Command::Train { common } => train_cmd(common),
        Command::Predict { run, data, labels, out } => predict_cmd(run, data, labels, out),
        Command::Compare { common, output } => experiment_cmd(common, output, false),
        Command::Sweep { common, output } => experiment_cmd(common, output, true),
        Command::Gradcheck {
            instances,
            seed,
            tolerance,
            out,
        } => gradcheck_cmd(*instances, *seed, *tolerance, out.as_deref()),
        Command::Report {
            report,
            regenerate,
            out,
            output,
        } => {
            let dir = out.clone().unwrap_or_else(|| report.parent().unwrap_or(Path::new(".")).to_path_buf());
            report_cmd(report, *regenerate, output, &dir)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

