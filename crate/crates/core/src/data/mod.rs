//! Datasets of variable-length multivariate records with observation masks.

mod io;
mod norm;
mod perturb;
mod split;
mod synth;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};

pub use io::{load_dataset, write_csv};
pub use norm::{apply_normalization, compute_norm_stats, NormStats};
pub use perturb::{inject_missing, subsample};
pub use split::{split_stratified, strata, DEFAULT_RATIOS};
pub use synth::{synthesize, GenConfig, MissingMode};

/// Environment switch that poisons masked placeholders with NaN.
pub const DEBUG_ENV: &str = "PROMPT_IMPUTE_DEBUG";

/// Whether masked placeholders are handed to models as NaN instead of 0.
pub fn poison_enabled() -> bool {
    static FLAG: OnceLock<bool> = OnceLock::new();
    *FLAG.get_or_init(|| std::env::var(DEBUG_ENV).is_ok_and(|v| v == "1"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

/// One record: an `L × N` value matrix with its observation mask.
///
/// Values at masked positions are stored as `0.0` and are not part of the
/// record's content; read them only through an imputation or fill step.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesRecord {
    id: String,
    length: usize,
    features: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    label: f64,
}

impl TimeSeriesRecord {
    pub fn new(
        id: impl Into<String>,
        length: usize,
        features: usize,
        mut values: Vec<f64>,
        mask: Vec<bool>,
        label: f64,
    ) -> Result<Self> {
        let id = id.into();
        ensure!(length >= 1, InvalidInput, "record {id}: length must be positive");
        ensure!(
            values.len() == length * features && mask.len() == length * features,
            Shape,
            "record {id}: expected {length}x{features} values and mask"
        );
        ensure!(label.is_finite(), InvalidInput, "record {id}: non-finite label");
        for (v, &m) in values.iter_mut().zip(&mask) {
            if m {
                ensure!(v.is_finite(), InvalidInput, "record {id}: non-finite observed value");
            } else {
                *v = 0.0;
            }
        }
        Ok(Self {
            id,
            length,
            features,
            values,
            mask,
            label,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn label(&self) -> f64 {
        self.label
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_observed(&self, t: usize, n: usize) -> bool {
        self.mask[t * self.features + n]
    }

    /// Observed value at `(t, n)`, `None` where masked.
    pub fn value(&self, t: usize, n: usize) -> Option<f64> {
        let k = t * self.features + n;
        self.mask[k].then(|| self.values[k])
    }

    /// Dense copy of the values with `placeholder` at masked positions.
    pub fn values_with(&self, placeholder: f64) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.mask)
            .map(|(&v, &m)| if m { v } else { placeholder })
            .collect()
    }

    /// Dense values as handed to a model: masked positions carry `0.0`, or NaN
    /// when [`poison_enabled`].
    pub fn model_values(&self) -> Vec<f64> {
        self.values_with(if poison_enabled() { f64::NAN } else { 0.0 })
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    pub(crate) fn map_observed(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (k, v) in out.values.iter_mut().enumerate() {
            if out.mask[k] {
                *v = f(k % self.features, *v);
            }
        }
        out
    }

    pub(crate) fn with_mask(&self, mask: Vec<bool>) -> Self {
        let mut out = self.clone();
        for (k, (v, &m)) in out.values.iter_mut().zip(&mask).enumerate() {
            debug_assert!(!m || self.mask[k], "a mask may only hide entries");
            if !m {
                *v = 0.0;
            }
        }
        out.mask = mask;
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Synthetic { config: GenConfig },
    File { data: PathBuf, labels: PathBuf },
    /// Built programmatically.
    Memory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    records: Vec<TimeSeriesRecord>,
    feature_count: usize,
    task: Task,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        records: Vec<TimeSeriesRecord>,
        feature_count: usize,
        task: Task,
        provenance: Provenance,
    ) -> Result<Self> {
        for r in &records {
            ensure!(
                r.features == feature_count,
                InvalidInput,
                "record {} has {} features, dataset has {feature_count}",
                r.id,
                r.features
            );
            if task == Task::Classification {
                ensure!(
                    r.label == 0.0 || r.label == 1.0,
                    InvalidInput,
                    "record {}: classification label {} is not 0 or 1",
                    r.id,
                    r.label
                );
            }
        }
        Ok(Self {
            records,
            feature_count,
            task,
            provenance,
        })
    }

    pub fn records(&self) -> &[TimeSeriesRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn labels(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn total_entries(&self) -> usize {
        self.records.iter().map(|r| r.mask.len()).sum()
    }

    pub fn missing_count(&self) -> usize {
        self.records.iter().map(|r| r.missing_count()).sum()
    }

    /// Fraction of masked entries over all records; 0 for an empty dataset.
    pub fn missing_rate(&self) -> f64 {
        let total = self.total_entries();
        if total == 0 {
            0.0
        } else {
            self.missing_count() as f64 / total as f64
        }
    }

    /// Records at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            feature_count: self.feature_count,
            task: self.task,
            provenance: self.provenance.clone(),
        }
    }

    pub(crate) fn with_records(&self, records: Vec<TimeSeriesRecord>) -> Self {
        Self {
            records,
            feature_count: self.feature_count,
            task: self.task,
            provenance: self.provenance.clone(),
        }
    }

    /// SHA-256 over ids, shapes, observed values, masks and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.feature_count as u64).to_le_bytes());
        for r in &self.records {
            h.update((r.id.len() as u64).to_le_bytes());
            h.update(r.id.as_bytes());
            h.update((r.length as u64).to_le_bytes());
            h.update(r.label.to_bits().to_le_bytes());
            for (&v, &m) in r.values.iter().zip(&r.mask) {
                h.update([m as u8]);
                h.update(if m { v.to_bits() } else { 0 }.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// SHA-256 over ids and masks only.
    pub fn mask_hash(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update((r.id.len() as u64).to_le_bytes());
            h.update(r.id.as_bytes());
            h.update((r.length as u64).to_le_bytes());
            let bits: Vec<u8> = r.mask.iter().map(|&m| m as u8).collect();
            h.update(&bits);
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&DatasetDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetDoc = serde_json::from_str(text)?;
        doc.into_dataset()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetDoc {
    feature_count: usize,
    task: Task,
    provenance: Provenance,
    records: Vec<RecordDoc>,
}

#[derive(Serialize, Deserialize)]
struct RecordDoc {
    id: String,
    length: usize,
    label: f64,
    values: Vec<Vec<Option<f64>>>,
    mask: Vec<Vec<u8>>,
}

impl From<&Dataset> for DatasetDoc {
    fn from(ds: &Dataset) -> Self {
        let n = ds.feature_count;
        let records = ds
            .records
            .iter()
            .map(|r| RecordDoc {
                id: r.id.clone(),
                length: r.length,
                label: r.label,
                values: (0..r.length)
                    .map(|t| (0..n).map(|j| r.value(t, j)).collect())
                    .collect(),
                mask: (0..r.length)
                    .map(|t| (0..n).map(|j| r.is_observed(t, j) as u8).collect())
                    .collect(),
            })
            .collect();
        Self {
            feature_count: n,
            task: ds.task,
            provenance: ds.provenance.clone(),
            records,
        }
    }
}

impl DatasetDoc {
    fn into_dataset(self) -> Result<Dataset> {
        let n = self.feature_count;
        let mut records = Vec::with_capacity(self.records.len());
        for doc in self.records {
            ensure!(
                doc.values.len() == doc.length && doc.mask.len() == doc.length,
                InvalidInput,
                "record {}: row count differs from length {}",
                doc.id,
                doc.length
            );
            let mut values = Vec::with_capacity(doc.length * n);
            let mut mask = Vec::with_capacity(doc.length * n);
            for (vrow, mrow) in doc.values.iter().zip(&doc.mask) {
                ensure!(
                    vrow.len() == n && mrow.len() == n,
                    InvalidInput,
                    "record {}: row width differs from {n}",
                    doc.id
                );
                for (v, &m) in vrow.iter().zip(mrow) {
                    ensure!(m <= 1, InvalidInput, "record {}: mask entry {m}", doc.id);
                    ensure!(
                        (m == 1) == v.is_some(),
                        InvalidInput,
                        "record {}: value presence disagrees with mask",
                        doc.id
                    );
                    values.push(v.unwrap_or(0.0));
                    mask.push(m == 1);
                }
            }
            records.push(TimeSeriesRecord::new(doc.id, doc.length, n, values, mask, doc.label)?);
        }
        Dataset::new(records, n, self.task, self.provenance)
    }
}
