use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::fsutil::write_atomic;
use crate::models::{Backbone, ParamCount};
use crate::training::Protocol;

use super::{ExperimentConfig, SweepKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

/// One trained-and-evaluated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub backbone: Backbone,
    pub protocol: Protocol,
    pub seed: u64,
    pub sweep_value: Option<f64>,
    pub layers: usize,
    pub lr_model: f64,
    pub lr_prompt: f64,
    pub status: RowStatus,
    pub error: Option<String>,
    /// Test-split metrics by name; empty for failed rows.
    pub metrics: BTreeMap<String, f64>,
    pub selection_epoch: Option<usize>,
    pub param_count: Option<ParamCount>,
    pub train_hash: String,
    pub val_hash: String,
    pub test_hash: String,
    pub mask_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub backbone: Backbone,
    pub protocol: Protocol,
    pub sweep_value: Option<f64>,
    pub metric: String,
    pub n: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// Learning-rate sweep summary: runs with the prompt rate below the model
/// rate versus at or above it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeAggregate {
    pub backbone: Backbone,
    pub protocol: Protocol,
    /// `"below"` or `"at-or-above"`.
    pub regime: String,
    pub metric: String,
    pub n: usize,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessCheck {
    /// (seed, sweep value) groups compared.
    pub groups: usize,
    /// Every group's rows share split and mask hashes.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub library_version: String,
    pub source_hash: String,
    pub wall_time_secs: f64,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub sweep: Option<SweepKind>,
    pub rows: Vec<ReportRow>,
    pub aggregates: Vec<Aggregate>,
    pub lr_regimes: Vec<RegimeAggregate>,
    pub fairness: FairnessCheck,
    pub manifest: ReportManifest,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status == RowStatus::Failed).count()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Pretty JSON with sorted keys.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self)?)?;
        s.push('\n');
        Ok(s)
    }

    /// Every metric value keyed by row identity; equal across reruns of
    /// the same config.
    pub fn metric_table(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            for (m, v) in &r.metrics {
                let key = format!(
                    "{}/{}/{}/{}/{m}",
                    r.backbone,
                    r.protocol,
                    r.seed,
                    r.sweep_value.map_or(String::new(), |v| v.to_string())
                );
                out.insert(key, *v);
            }
        }
        out
    }
}

pub(crate) fn summarize(values: &mut [f64]) -> (f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    (median, values[0], values[n - 1])
}

fn value_key(v: Option<f64>) -> Option<u64> {
    v.map(f64::to_bits)
}

/// Median/min/max per (backbone, protocol, sweep value, metric) over
/// successful rows, in first-appearance order.
pub fn aggregate(rows: &[ReportRow]) -> Vec<Aggregate> {
    let mut order: Vec<(Backbone, Protocol, Option<u64>, String)> = Vec::new();
    let mut values: BTreeMap<(Backbone, Protocol, Option<u64>, String), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == RowStatus::Ok) {
        for (m, &v) in &r.metrics {
            let key = (r.backbone, r.protocol, value_key(r.sweep_value), m.clone());
            if !values.contains_key(&key) {
                order.push(key.clone());
            }
            values.entry(key).or_default().push(v);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let mut v = values.remove(&key).expect("key recorded");
            let (median, min, max) = summarize(&mut v);
            Aggregate {
                backbone: key.0,
                protocol: key.1,
                sweep_value: key.2.map(f64::from_bits),
                metric: key.3,
                n: v.len(),
                median,
                min,
                max,
            }
        })
        .collect()
}

pub fn lr_regimes(rows: &[ReportRow]) -> Vec<RegimeAggregate> {
    let mut values: BTreeMap<(Backbone, Protocol, &'static str, String), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == RowStatus::Ok) {
        let regime = if r.lr_prompt < r.lr_model { "below" } else { "at-or-above" };
        for (m, &v) in &r.metrics {
            values.entry((r.backbone, r.protocol, regime, m.clone())).or_default().push(v);
        }
    }
    values
        .into_iter()
        .map(|((backbone, protocol, regime, metric), mut v)| {
            let (median, min, max) = summarize(&mut v);
            RegimeAggregate {
                backbone,
                protocol,
                regime: regime.to_string(),
                metric,
                n: v.len(),
                median,
                min,
                max,
            }
        })
        .collect()
}

/// Compares split and mask hashes across all rows of each (seed, sweep value).
pub fn check_fairness(rows: &[ReportRow]) -> FairnessCheck {
    let mut first: BTreeMap<(u64, Option<u64>), [&str; 4]> = BTreeMap::new();
    let mut consistent = true;
    for r in rows {
        let hashes = [
            r.train_hash.as_str(),
            r.val_hash.as_str(),
            r.test_hash.as_str(),
            r.mask_hash.as_str(),
        ];
        let seen = first.entry((r.seed, value_key(r.sweep_value))).or_insert(hashes);
        consistent &= *seen == hashes;
    }
    FairnessCheck {
        groups: first.len(),
        consistent,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
    FigureData,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "figure-data" => Ok(ReportFormat::FigureData),
            other => Err(Error::InvalidArgument(format!(
                "unknown format {other:?}; expected json, csv or figure-data"
            ))),
        }
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidInput(format!("csv serialization: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// One flat table, one line per row.
pub fn report_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut metric_names: Vec<&String> = report.rows.iter().flat_map(|r| r.metrics.keys()).collect();
    metric_names.sort();
    metric_names.dedup();
    let mut header: Vec<String> = [
        "backbone",
        "protocol",
        "seed",
        "sweep_kind",
        "sweep_value",
        "layers",
        "lr_model",
        "lr_prompt",
        "status",
        "error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(metric_names.iter().map(|s| s.to_string()));
    header.extend(
        [
            "selection_epoch",
            "model_params",
            "prompt_params",
            "train_hash",
            "val_hash",
            "test_hash",
            "mask_hash",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    let kind = report.sweep.map_or("", SweepKind::name);
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut line = vec![
                r.backbone.to_string(),
                r.protocol.to_string(),
                r.seed.to_string(),
                kind.to_string(),
                opt(r.sweep_value),
                r.layers.to_string(),
                r.lr_model.to_string(),
                r.lr_prompt.to_string(),
                match r.status {
                    RowStatus::Ok => "ok".into(),
                    RowStatus::Failed => "failed".into(),
                },
                r.error.clone().unwrap_or_default(),
            ];
            line.extend(metric_names.iter().map(|m| opt(r.metrics.get(*m).copied())));
            line.push(r.selection_epoch.map_or(String::new(), |e| e.to_string()));
            line.push(r.param_count.map_or(String::new(), |c| c.model_count.to_string()));
            line.push(r.param_count.map_or(String::new(), |c| c.prompt_count.to_string()));
            line.extend([&r.train_hash, &r.val_hash, &r.test_hash, &r.mask_hash].map(|h| h.clone()));
            line
        })
        .collect();
    csv_bytes(&header, &rows)
}

/// Plot-ready aggregates, one table per backbone:
/// `sweep_value, protocol, metric, median, min, max`.
pub fn figure_data(report: &ExperimentReport) -> Result<Vec<(Backbone, Vec<u8>)>> {
    let header: Vec<String> = ["sweep_value", "protocol", "metric", "median", "min", "max"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut backbones: Vec<Backbone> = report.aggregates.iter().map(|a| a.backbone).collect();
    backbones.sort();
    backbones.dedup();
    backbones
        .into_iter()
        .map(|b| {
            let rows: Vec<Vec<String>> = report
                .aggregates
                .iter()
                .filter(|a| a.backbone == b)
                .map(|a| {
                    vec![
                        opt(a.sweep_value),
                        a.protocol.to_string(),
                        a.metric.clone(),
                        a.median.to_string(),
                        a.min.to_string(),
                        a.max.to_string(),
                    ]
                })
                .collect();
            Ok((b, csv_bytes(&header, &rows)?))
        })
        .collect()
}

/// Writes the requested formats into `dir` (atomically, file by file) and
/// returns the paths written.
pub fn emit_report(report: &ExperimentReport, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    ensure!(!formats.is_empty(), InvalidArgument, "no report format requested");
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut written = Vec::new();
    let stem = report.sweep.map_or("compare", SweepKind::name);
    for f in formats {
        match f {
            ReportFormat::Json => {
                let p = dir.join("report.json");
                write_atomic(&p, report.to_json()?.as_bytes())?;
                written.push(p);
            }
            ReportFormat::Csv => {
                let p = dir.join("report.csv");
                write_atomic(&p, &report_csv(report)?)?;
                written.push(p);
            }
            ReportFormat::FigureData => {
                for (b, bytes) in figure_data(report)? {
                    let p = dir.join(format!("figure-{stem}-{b}.csv"));
                    write_atomic(&p, &bytes)?;
                    written.push(p);
                }
            }
        }
    }
    Ok(written)
}
