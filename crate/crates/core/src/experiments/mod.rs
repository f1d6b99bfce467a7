//! Experiment designs: protocol comparisons and sweeps over missing rate,
//! training-set size, prompt learning rate and layer count.

mod config;
mod report;

use std::time::Instant;

use rayon::prelude::*;

use crate::data::{
    apply_normalization, compute_norm_stats, inject_missing, split_stratified, subsample, Dataset, Task,
};
use crate::error::{Error, Result};
use crate::metrics::{classification_metrics, regression_metrics};
use crate::models::{ArchConfig, Backbone, HeadKind};
use crate::training::{predict, train, Protocol, TrainConfig};

pub use config::{DataSource, ExperimentConfig, SweepKind, SweepSpec, BASE_RATE_SLACK};
pub use report::{
    aggregate, check_fairness, emit_report, figure_data, lr_regimes, report_csv, Aggregate, ExperimentReport,
    FairnessCheck, RegimeAggregate, ReportFormat, ReportManifest, ReportRow, RowStatus,
};

/// Normalized splits shared by every protocol within one (seed, sweep value).
struct Cell {
    seed: u64,
    value: Option<f64>,
    splits: Result<(Dataset, Dataset, Dataset), String>,
    hashes: [String; 4],
}

fn build_cell(source: &Dataset, cfg: &ExperimentConfig, seed: u64, value: Option<f64>) -> Cell {
    let mut hashes: [String; 4] = Default::default();
    let splits = (|| -> Result<(Dataset, Dataset, Dataset)> {
        let base = match (cfg.sweep.as_ref().map(|s| s.kind), value) {
            (Some(SweepKind::Missing), Some(rate)) => {
                let target = rate.max(source.missing_rate());
                if (target - source.missing_rate()).abs() > 0.0 {
                    inject_missing(source, target, seed)?
                } else {
                    source.clone()
                }
            }
            _ => source.clone(),
        };
        let (mut tr, va, te) = split_stratified(&base, cfg.split, seed)?;
        if let (Some(SweepKind::Samples), Some(f)) = (cfg.sweep.as_ref().map(|s| s.kind), value) {
            tr = subsample(&tr, f, seed)?;
        }
        hashes = [tr.content_hash(), va.content_hash(), te.content_hash(), base.mask_hash()];
        let stats = compute_norm_stats(&tr);
        Ok((
            apply_normalization(&tr, &stats)?,
            apply_normalization(&va, &stats)?,
            apply_normalization(&te, &stats)?,
        ))
    })()
    .map_err(|e| e.to_string());
    Cell {
        seed,
        value,
        splits,
        hashes,
    }
}

fn run_job(cfg: &ExperimentConfig, task: Task, cell: &Cell, backbone: Backbone, protocol: Protocol) -> ReportRow {
    let kind = cfg.sweep.as_ref().map(|s| s.kind);
    let layers = match (kind, cell.value) {
        (Some(SweepKind::Layers), Some(v)) if protocol != Protocol::Pai => v as usize,
        _ => cfg.layers,
    };
    let mut tc = TrainConfig {
        protocol,
        seed: cell.seed,
        ..cfg.train.clone()
    };
    if let (Some(SweepKind::Lr), Some(v)) = (kind, cell.value) {
        tc.lr_prompt = v;
    }
    let mut row = ReportRow {
        backbone,
        protocol,
        seed: cell.seed,
        sweep_value: cell.value,
        layers,
        lr_model: tc.lr_model,
        lr_prompt: tc.lr_prompt,
        status: RowStatus::Failed,
        error: None,
        metrics: Default::default(),
        selection_epoch: None,
        param_count: None,
        train_hash: cell.hashes[0].clone(),
        val_hash: cell.hashes[1].clone(),
        test_hash: cell.hashes[2].clone(),
        mask_hash: cell.hashes[3].clone(),
    };
    let (tr, va, te) = match &cell.splits {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.clone());
            return row;
        }
    };
    let arch = ArchConfig {
        backbone,
        layers,
        hidden_dim: cfg.hidden_dim,
        head: HeadKind::for_task(task),
        input_dim: tr.feature_count(),
    };
    let outcome = (|| -> Result<_> {
        let run = train(tr, va, &arch, &tc)?;
        let scores = predict(&run, te)?;
        let labels = te.labels();
        let metrics = match task {
            Task::Classification => {
                let m = classification_metrics(&labels, &scores)?;
                [("auroc", m.auroc), ("auprc", m.auprc), ("min_pse", m.min_pse)]
            }
            Task::Regression => {
                let m = regression_metrics(&labels, &scores)?;
                [("mse", m.mse), ("rmse", m.rmse), ("mae", m.mae)]
            }
        };
        Ok((run, metrics))
    })();
    match outcome {
        Ok((run, metrics)) => {
            row.status = RowStatus::Ok;
            row.metrics = metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect();
            row.selection_epoch = Some(run.selection_epoch());
            row.param_count = Some(run.manifest.param_count);
        }
        Err(e) => {
            log::warn!("{backbone}/{protocol} seed {} failed: {e}", cell.seed);
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Runs every (sweep value × seed × backbone × protocol) cell on a pool of
/// `workers` threads. Runs that fail become failed rows.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let started = Instant::now();
    let source = cfg.dataset.load()?;
    let task = cfg.dataset.task();
    if source.task() != task {
        return Err(Error::Config("dataset task does not match the config".into()));
    }
    let values: Vec<Option<f64>> = match &cfg.sweep {
        None => vec![None],
        Some(s) => {
            if s.kind == SweepKind::Missing && s.values[0] < source.missing_rate() - BASE_RATE_SLACK {
                return Err(Error::Config(format!(
                    "missing sweep starts at {} but the data is already {:.4} missing",
                    s.values[0],
                    source.missing_rate()
                )));
            }
            s.values.iter().map(|&v| Some(v)).collect()
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;

    let rows = pool.install(|| {
        let cells: Vec<Cell> = values
            .iter()
            .flat_map(|&v| cfg.seeds.iter().map(move |&s| (s, v)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(s, v)| build_cell(&source, cfg, s, v))
            .collect();
        let jobs: Vec<(&Cell, Backbone, Protocol)> = cells
            .iter()
            .flat_map(|c| {
                cfg.backbones
                    .iter()
                    .flat_map(move |&b| cfg.protocols.iter().map(move |&p| (c, b, p)))
            })
            .collect();
        jobs.into_par_iter()
            .map(|(c, b, p)| run_job(cfg, task, c, b, p))
            .collect::<Vec<_>>()
    });

    let aggregates = aggregate(&rows);
    let regimes = if cfg.sweep.as_ref().map(|s| s.kind) == Some(SweepKind::Lr) {
        lr_regimes(&rows)
    } else {
        Vec::new()
    };
    let fairness = check_fairness(&rows);
    Ok(ExperimentReport {
        sweep: cfg.sweep.as_ref().map(|s| s.kind),
        aggregates,
        lr_regimes: regimes,
        fairness,
        manifest: ReportManifest {
            config: cfg.clone(),
            config_hash: cfg.hash()?,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            source_hash: source.content_hash(),
            wall_time_secs: started.elapsed().as_secs_f64(),
            workers: workers.max(1),
        },
        rows,
    })
}

/// The comparison design: no sweep, whatever the config says.
pub fn run_compare_protocols(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    cfg.sweep = None;
    run_experiment(&cfg, workers)
}

/// The sweep design; the config must carry a sweep spec.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    if cfg.sweep.is_none() {
        return Err(Error::Config("sweep requested but the config has no sweep spec".into()));
    }
    run_experiment(cfg, workers)
}

/// Re-runs the experiment recorded in a report's manifest.
pub fn regenerate(report: &ExperimentReport, workers: usize) -> Result<ExperimentReport> {
    run_experiment(&report.manifest.config, workers)
}
