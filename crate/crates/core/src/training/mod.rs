//! Losses, the two-rate optimiser and the training loop shared by every
//! protocol.

mod batch;
mod loss;
mod optim;
mod run_dir;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{Dataset, NormStats, Task};
use crate::error::{ensure, Error, Result};
use crate::metrics::{auprc, auroc, regression_metrics};
use crate::models::{
    backbone_forward, count_parameters, head_forward, to_predictions, ArchConfig, BoundParams, ModelParams,
    ParamCount,
};
use crate::prompt::{fill_prompt, FeaturePrompt, PromptInit};

pub use batch::{make_batch, observed_means, prepare, Batch, Prepared, PreparedRecord};
pub use loss::{loss_classification, loss_regression};
pub use optim::{async_update, Optimizer, OptimizerSettings, ParamGroups};
pub use run_dir::{load_run, save_run};

/// How missing entries reach the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Learnable prompt written into masked positions.
    Pai,
    Locf,
    Zero,
    /// Per-feature training mean.
    Mean,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [Protocol::Pai, Protocol::Locf, Protocol::Zero, Protocol::Mean];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Pai => "pai",
            Protocol::Locf => "locf",
            Protocol::Zero => "zero",
            Protocol::Mean => "mean",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Auprc,
    Auroc,
    Mse,
    /// Validation loss; the fallback when a ranking metric is undefined.
    Loss,
}

impl SelectionMetric {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification => SelectionMetric::Auprc,
            Task::Regression => SelectionMetric::Mse,
        }
    }

    fn higher_is_better(self) -> bool {
        matches!(self, SelectionMetric::Auprc | SelectionMetric::Auroc)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_model: f64,
    pub lr_prompt: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub optimizer: Optimizer,
    pub protocol: Protocol,
    pub prompt_init: PromptInit,
    /// Defaults to AUPRC for classification, MSE for regression.
    pub selection_metric: Option<SelectionMetric>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr_model: 1e-2,
            lr_prompt: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            optimizer: Optimizer::Adam,
            protocol: Protocol::Pai,
            prompt_init: PromptInit::Zeros,
            selection_metric: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, InvalidArgument, "epochs must be at least 1");
        ensure!(self.batch_size >= 1, InvalidArgument, "batch_size must be at least 1");
        for (name, lr) in [("lr_model", self.lr_model), ("lr_prompt", self.lr_prompt)] {
            ensure!(lr > 0.0 && lr.is_finite(), InvalidArgument, "{name} must be positive, got {lr}");
        }
        ensure!(
            (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2),
            InvalidArgument,
            "Adam betas must lie in [0, 1)"
        );
        ensure!(self.eps > 0.0, InvalidArgument, "eps must be positive");
        Ok(())
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            kind: self.optimizer,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub arch: ArchConfig,
    pub selection_metric: SelectionMetric,
    pub selection_epoch: usize,
    pub train_hash: String,
    pub val_hash: String,
    pub param_count: ParamCount,
    /// Fill vector of the mean protocol.
    pub fill: Vec<f64>,
    /// Normalization the splits were prepared with, when known.
    pub norm: Option<NormStats>,
    pub library_version: String,
}

/// Best-validation weights plus the full training record.
#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub model: ModelParams,
    /// Present, and frozen, under the prompt protocol only.
    pub prompt: Option<FeaturePrompt>,
    pub history: Vec<EpochStats>,
    pub manifest: RunManifest,
}

impl TrainedRun {
    pub fn protocol(&self) -> Protocol {
        self.manifest.config.protocol
    }

    pub fn selection_epoch(&self) -> usize {
        self.manifest.selection_epoch
    }
}

/// Raw head outputs (`B × 1`): logits for classification, values for
/// regression. Under the prompt protocol, `prompt` fills masked positions.
pub fn forward(
    tape: &mut Tape,
    arch: &ArchConfig,
    params: &BoundParams,
    prompt: Option<Var>,
    batch: &Batch,
) -> Result<Var> {
    let rows = batch.layout.steps * batch.layout.size();
    let mut x = tape.constant(&[rows, arch.input_dim], batch.x.clone())?;
    if let Some(v) = prompt {
        x = fill_prompt(tape, x, &batch.mask, v)?;
    }
    let e = backbone_forward(arch, params, tape, x, &batch.layout)?;
    head_forward(arch, params, tape, e)
}

/// Forward and backward on one batch; gradients are added into the tensors
/// of `groups`. Returns the batch loss. A non-finite loss is returned without
/// a backward pass.
pub fn compute_gradients(groups: &mut ParamGroups, batch: &Batch, tape: &mut Tape) -> Result<f64> {
    tape.reset();
    let arch = groups.model.arch().clone();
    let bound = groups.model.bind(tape, true);
    let v = groups.prompt.as_ref().map(|p| p.bind(tape));
    let raw = forward(tape, &arch, &bound, v, batch)?;
    let classification = arch.head.task() == Task::Classification;
    let loss = loss::tape_loss(tape, raw, &batch.targets, classification)?;
    let value = tape.item(loss);
    if !value.is_finite() {
        return Ok(value);
    }
    tape.backward(loss)?;
    groups.model.collect_grads(tape, &bound)?;
    if let (Some(p), Some(v)) = (groups.prompt.as_mut(), v) {
        if let Some(g) = tape.grad(v) {
            p.accumulate_grad(g)?;
        }
    }
    Ok(value)
}

/// Raw outputs for every prepared record, in order, with nothing trainable.
fn raw_outputs(
    model: &ModelParams,
    prompt: Option<&FeaturePrompt>,
    prep: &Prepared,
    batch_size: usize,
) -> Result<Vec<f64>> {
    let frozen = prompt.map(|p| p.clone().frozen());
    let mut tape = Tape::new();
    let mut out = Vec::with_capacity(prep.records.len());
    let indices: Vec<usize> = (0..prep.records.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        tape.reset();
        let bound = model.bind(&mut tape, false);
        let v = frozen.as_ref().map(|p| p.bind(&mut tape));
        let batch = make_batch(prep, chunk)?;
        let raw = forward(&mut tape, model.arch(), &bound, v, &batch)?;
        out.extend_from_slice(tape.value(raw));
    }
    Ok(out)
}

fn resolve_metric(requested: Option<SelectionMetric>, task: Task, val: &Dataset) -> SelectionMetric {
    let metric = requested.unwrap_or(SelectionMetric::for_task(task));
    let labels = val.labels();
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let undefined = match metric {
        SelectionMetric::Auprc => pos == 0,
        SelectionMetric::Auroc => pos == 0 || pos == labels.len(),
        _ => false,
    };
    if undefined {
        log::warn!("{metric:?} is undefined on the validation split; selecting by validation loss");
        SelectionMetric::Loss
    } else {
        metric
    }
}

fn validation_metric(metric: SelectionMetric, task: Task, raw: &[f64], labels: &[f64]) -> Result<f64> {
    let classification = task == Task::Classification;
    let preds = || {
        if classification {
            raw.iter().map(|&z| crate::autodiff::sigmoid(z)).collect()
        } else {
            raw.to_vec()
        }
    };
    match metric {
        SelectionMetric::Auprc => auprc(labels, &preds()),
        SelectionMetric::Auroc => auroc(labels, &preds()),
        SelectionMetric::Mse => Ok(regression_metrics(labels, &preds())?.mse),
        SelectionMetric::Loss if classification => Ok(loss::bce_from_logits(labels, raw)),
        SelectionMetric::Loss => Ok(regression_metrics(labels, raw)?.mse),
    }
}

/// Independent random streams derived from one seed.
pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Trains on normalized splits. The prompt protocol sees the raw masked
/// data; the others impute first. Keeps the weights of the best validation
/// epoch (earliest on ties).
pub fn train(train: &Dataset, val: &Dataset, arch: &ArchConfig, cfg: &TrainConfig) -> Result<TrainedRun> {
    cfg.validate()?;
    arch.validate()?;
    ensure!(!train.is_empty(), InvalidArgument, "training split is empty");
    ensure!(!val.is_empty(), InvalidArgument, "validation split is empty");
    ensure!(
        train.feature_count() == arch.input_dim && val.feature_count() == arch.input_dim,
        InvalidInput,
        "model expects {} features, splits have {} and {}",
        arch.input_dim,
        train.feature_count(),
        val.feature_count()
    );
    let task = train.task();
    ensure!(
        arch.head.task() == task && val.task() == task,
        InvalidArgument,
        "{:?} head cannot be trained on a {task:?} dataset",
        arch.head
    );

    let fill = observed_means(train);
    let prep_train = prepare(train, cfg.protocol, &fill)?;
    let prep_val = prepare(val, cfg.protocol, &fill)?;
    let val_labels = val.labels();

    let model = ModelParams::init(arch, cfg.seed)?;
    let prompt = match cfg.protocol {
        Protocol::Pai => {
            let means = NormStats {
                mean: fill.clone(),
                std: vec![1.0; fill.len()],
            };
            Some(FeaturePrompt::init(
                cfg.prompt_init,
                arch.input_dim,
                Some(&means),
                cfg.seed.wrapping_add(1),
            )?)
        }
        _ => None,
    };
    let param_count = count_parameters(&model, prompt.as_ref());
    let mut groups =
        ParamGroups::two_rate(model, prompt, cfg.lr_model, cfg.lr_prompt, cfg.optimizer_settings())?;
    let metric = resolve_metric(cfg.selection_metric, task, val);

    let mut rng = stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..prep_train.records.len()).collect();
    let mut tape = Tape::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams, Option<FeaturePrompt>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = make_batch(&prep_train, chunk)?;
            let loss = compute_gradients(&mut groups, &batch, &mut tape)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            async_update(&mut groups)?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let raw = raw_outputs(&groups.model, groups.prompt.as_ref(), &prep_val, cfg.batch_size)?;
        let val_metric = validation_metric(metric, task, &raw, &val_labels)?;
        if !val_metric.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                loss: val_metric,
            });
        }
        log::debug!("epoch {epoch}: train loss {train_loss:.6}, validation {metric:?} {val_metric:.6}");
        let improved = match &best {
            None => true,
            Some((score, ..)) if metric.higher_is_better() => val_metric > *score,
            Some((score, ..)) => val_metric < *score,
        };
        if improved {
            best = Some((val_metric, epoch, groups.model.clone(), groups.prompt.clone()));
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_metric,
        });
    }

    let (_, selection_epoch, model, prompt) = best.expect("at least one epoch ran");
    Ok(TrainedRun {
        model,
        prompt: prompt.map(FeaturePrompt::frozen),
        history,
        manifest: RunManifest {
            config: cfg.clone(),
            arch: arch.clone(),
            selection_metric: metric,
            selection_epoch,
            train_hash: train.content_hash(),
            val_hash: val.content_hash(),
            param_count,
            fill,
            norm: None,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Scores per record (probabilities or regression values) with the model and
/// prompt frozen.
pub fn predict(run: &TrainedRun, ds: &Dataset) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Ok(Vec::new());
    }
    let arch = run.model.arch();
    ensure!(
        ds.feature_count() == arch.input_dim,
        InvalidInput,
        "model expects {} features, dataset has {}",
        arch.input_dim,
        ds.feature_count()
    );
    let prep = prepare(ds, run.protocol(), &run.manifest.fill)?;
    let raw = raw_outputs(&run.model, run.prompt.as_ref(), &prep, run.manifest.config.batch_size)?;
    Ok(to_predictions(arch.head, &raw))
}

#[cfg(test)]
mod tests;
