//! Training sequence predictors on incomplete multivariate time series.
//!
//! Missing entries are filled with a learnable per-feature prompt vector that
//! is optimised jointly with the model under its own learning rate, and
//! frozen at inference. Impute-then-regress baselines (LOCF, zero, mean)
//! share the same backbones, heads and training loop so the protocols can be
//! compared on identical data.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod experiments;
pub mod fsutil;
pub mod gradcheck;
pub mod imputation;
pub mod metrics;
pub mod models;
pub mod prompt;
pub mod training;

pub use autodiff::{Tape, Tensor, Var};
pub use data::{Dataset, GenConfig, MissingMode, NormStats, Task, TimeSeriesRecord};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, ExperimentReport};
pub use models::{ArchConfig, Backbone, HeadKind, ModelParams};
pub use prompt::{FeaturePrompt, PromptInit};
pub use training::{Protocol, TrainConfig, TrainedRun};
