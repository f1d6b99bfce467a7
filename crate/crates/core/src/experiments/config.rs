use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_dataset, synthesize, Dataset, GenConfig, Task, DEFAULT_RATIOS};
use crate::error::{Error, Result};
use crate::models::{Backbone, DEFAULT_HIDDEN_DIM, MAX_LAYERS};
use crate::training::{Protocol, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(GenConfig),
    Files { data: PathBuf, labels: PathBuf, task: Task },
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Synthetic(g) => synthesize(g),
            DataSource::Files { data, labels, task } => load_dataset(data, labels, *task),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            DataSource::Synthetic(g) => g.task,
            DataSource::Files { task, .. } => *task,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    /// Target overall missing rates, applied by hiding further observed entries.
    Missing,
    /// Fractions of the training split kept.
    Samples,
    /// Prompt learning rates, model rate fixed.
    Lr,
    /// Layer counts for the impute-then-regress protocols; the prompt
    /// protocol stays at one layer.
    Layers,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Missing => "missing",
            SweepKind::Samples => "samples",
            SweepKind::Lr => "lr",
            SweepKind::Layers => "layers",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub values: Vec<f64>,
}

/// Slack allowed when the first missing-rate grid value sits just under the
/// dataset's realized rate; such points run on the data as is.
pub const BASE_RATE_SLACK: f64 = 0.005;

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("{} sweep: {msg}", self.kind.name())));
        if self.values.is_empty() {
            return bad("grid is empty".into());
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("grid values must be finite".into());
        }
        match self.kind {
            SweepKind::Missing => {
                if self.values.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("missing rates must be strictly increasing".into());
                }
                if self.values.iter().any(|&v| !(0.0..1.0).contains(&v)) {
                    return bad("missing rates must lie in [0, 1)".into());
                }
            }
            SweepKind::Samples => {
                if self.values.iter().any(|&v| v <= 0.0 || v > 1.0) {
                    return bad("sample fractions must lie in (0, 1]".into());
                }
            }
            SweepKind::Lr => {
                if self.values.iter().any(|&v| v <= 0.0) {
                    return bad("learning rates must be positive".into());
                }
            }
            SweepKind::Layers => {
                if self
                    .values
                    .iter()
                    .any(|&v| v.fract() != 0.0 || v < 1.0 || v > MAX_LAYERS as f64)
                {
                    return bad(format!("layer counts must be integers in 1..={MAX_LAYERS}"));
                }
            }
        }
        Ok(())
    }
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN_DIM
}

fn default_layers() -> usize {
    1
}

fn default_split() -> [f64; 3] {
    DEFAULT_RATIOS
}

/// One reproducible experiment: data, grid, seeds and training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DataSource,
    pub backbones: Vec<Backbone>,
    pub protocols: Vec<Protocol>,
    pub seeds: Vec<u64>,
    /// Training settings; `protocol` and `seed` are set per run.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.backbones.is_empty() {
            return bad("backbones must not be empty");
        }
        if self.protocols.is_empty() {
            return bad("protocols must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if !(1..=MAX_LAYERS).contains(&self.layers) {
            return bad("layers must be in 1..=3");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let DataSource::Synthetic(g) = &self.dataset {
            g.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(s) = &self.sweep {
            s.validate()?;
        }
        Ok(())
    }

    /// Parses a config file. Relative data paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DataSource::Files { data, labels, .. } = &mut cfg.dataset {
            for p in [data, labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::to_value(self)?)?)
    }

    /// SHA-256 of the canonical (sorted-key) JSON form.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(&serde_json::to_value(self)?)?;
        Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
    }
}
