//! Whole-pipeline gradient check: fill → backbone → head → loss, comparing
//! analytic gradients of every model parameter and the prompt against
//! central finite differences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{relative_error, Tape};
use crate::data::{Dataset, Provenance, Task, TimeSeriesRecord};
use crate::error::{ensure, Result};
use crate::models::{ArchConfig, Backbone, HeadKind, ModelParams};
use crate::prompt::{FeaturePrompt, PromptInit};
use crate::training::{
    compute_gradients, forward, make_batch, prepare, stream, Batch, OptimizerSettings, ParamGroups, Protocol,
};

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceLimits {
    pub max_len: usize,
    pub max_features: usize,
    pub max_hidden: usize,
    pub max_batch: usize,
}

impl Default for InstanceLimits {
    fn default() -> Self {
        Self {
            max_len: 5,
            max_features: 3,
            max_hidden: 6,
            max_batch: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub backbone: Backbone,
    pub head: HeadKind,
    pub protocol: Protocol,
    pub instance: usize,
    pub parameters: usize,
    pub max_rel_error: f64,
    /// Largest |analytic − numeric| over all parameters.
    pub max_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub eps: f64,
    pub tolerance: f64,
    pub cases: Vec<GradcheckCase>,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// A random batch with random masks, plus a model and (for the prompt
/// protocol) a prompt with nonzero values.
pub struct Instance {
    pub groups: ParamGroups,
    pub batch: Batch,
}

/// Instances must keep every relu input at least this far from 0, so that
/// no ±eps perturbation crosses a kink.
pub const KINK_MARGIN: f64 = 1e-2;
/// Instances must have a loss below this. At eps = 1e-4 one ulp of the loss
/// moves a central difference by ulp(L)/2e-4, which for L ≥ 1 already
/// exceeds 1e-4 relative to the 1e-8 floor on a vanishing gradient.
pub const MAX_INSTANCE_LOSS: f64 = 1.0;
const MAX_ATTEMPTS: u64 = 1000;

/// A random instance on which the finite-difference check is decidable:
/// draws are repeated (deterministically) until the relu margin and loss
/// bounds hold.
pub fn random_instance(
    backbone: Backbone,
    head: HeadKind,
    protocol: Protocol,
    limits: InstanceLimits,
    seed: u64,
) -> Result<Instance> {
    for attempt in 0..MAX_ATTEMPTS {
        let inst = draw_instance(backbone, head, protocol, limits, seed, attempt)?;
        let mut tape = Tape::new();
        let bound = inst.groups.model.bind(&mut tape, false);
        let v = inst.groups.prompt.as_ref().map(|p| p.bind(&mut tape));
        forward(&mut tape, inst.groups.model.arch(), &bound, v, &inst.batch)?;
        let margin_ok = tape.kink_margin().is_none_or(|m| m >= KINK_MARGIN);
        if margin_ok && batch_loss(&inst.groups.model, inst.groups.prompt.as_ref(), &inst.batch)? < MAX_INSTANCE_LOSS {
            return Ok(inst);
        }
    }
    Err(crate::error::Error::Numeric(format!(
        "no decidable instance in {MAX_ATTEMPTS} draws for seed {seed}"
    )))
}

fn draw_instance(
    backbone: Backbone,
    head: HeadKind,
    protocol: Protocol,
    limits: InstanceLimits,
    seed: u64,
    attempt: u64,
) -> Result<Instance> {
    let mut rng = stream(seed, 7 + attempt);
    let n = rng.random_range(1..=limits.max_features);
    let d = rng.random_range(1..=limits.max_hidden);
    let b = rng.random_range(1..=limits.max_batch);
    let task = head.task();
    let records = (0..b)
        .map(|i| {
            let len = rng.random_range(1..=limits.max_len);
            let values: Vec<f64> = (0..len * n).map(|_| rng.random_range(-1.5..1.5)).collect();
            let mask: Vec<bool> = (0..len * n).map(|_| rng.random_bool(0.6)).collect();
            let label = match task {
                Task::Classification => rng.random_range(0..2) as f64,
                Task::Regression => rng.random_range(-1.0..1.0),
            };
            TimeSeriesRecord::new(format!("g{i}"), len, n, values, mask, label)
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset::new(records, n, task, Provenance::Memory)?;
    let prep = prepare(&ds, protocol, &vec![0.0; n])?;
    let indices: Vec<usize> = (0..b).collect();
    let batch = make_batch(&prep, &indices)?;
    let arch = ArchConfig {
        backbone,
        layers: rng.random_range(1..=2),
        hidden_dim: d,
        head,
        input_dim: n,
    };
    let mut model = ModelParams::init(&arch, rng.random())?;
    // Zero biases can park a relu exactly on its kink (e.g. an all-missing
    // record under zero fill embeds to 0); check at a generic point instead.
    for t in model.tensors_mut() {
        if t.shape().len() == 1 {
            t.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
    }
    let prompt = match protocol {
        Protocol::Pai => Some(FeaturePrompt::init(PromptInit::Uniform, n, None, rng.random())?),
        _ => None,
    };
    let groups = ParamGroups::two_rate(model, prompt, 1e-2, 1e-3, OptimizerSettings::default())?;
    Ok(Instance { groups, batch })
}

/// Loss of `batch` at the given parameters, forward only.
pub fn batch_loss(model: &ModelParams, prompt: Option<&FeaturePrompt>, batch: &Batch) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, false);
    let v = prompt.map(|p| p.clone().frozen().bind(&mut tape));
    let raw = forward(&mut tape, model.arch(), &bound, v, batch)?;
    let value = if model.arch().head.task() == Task::Classification {
        tape.bce_with_logits(raw, &batch.targets)?
    } else {
        let y = tape.constant(&[batch.targets.len(), 1], batch.targets.clone())?;
        let diff = tape.sub(raw, y)?;
        let sq = tape.mul(diff, diff)?;
        tape.mean(sq)?
    };
    Ok(tape.item(value))
}

/// Max relative and absolute error between analytic and numeric gradients
/// over every parameter of the instance. Returns (count, rel, abs).
pub fn check_instance(inst: &mut Instance, eps: f64) -> Result<(usize, f64, f64)> {
    ensure!(eps > 0.0, InvalidArgument, "eps must be positive");
    let mut tape = Tape::new();
    compute_gradients(&mut inst.groups, &inst.batch, &mut tape)?;
    let mut analytic: Vec<f64> = Vec::new();
    for (_, t) in inst.groups.model.tensors() {
        analytic.extend_from_slice(t.grad().unwrap_or(&vec![0.0; t.numel()]));
    }
    if let Some(p) = &inst.groups.prompt {
        analytic.extend_from_slice(p.grad().unwrap_or(&vec![0.0; p.len()]));
    }
    inst.groups.zero_grads();

    let mut model = inst.groups.model.clone();
    let mut prompt = inst.groups.prompt.clone();
    let (mut rel, mut abs) = (0.0f64, 0.0f64);
    let mut k = 0;
    let tensor_count = model.tensors().len();
    for ti in 0..=tensor_count {
        let len = if ti < tensor_count {
            model.tensors()[ti].1.numel()
        } else {
            prompt.as_ref().map_or(0, FeaturePrompt::len)
        };
        for j in 0..len {
            let mut at = |delta: f64| -> Result<f64> {
                if ti < tensor_count {
                    let t = model.tensors_mut().nth(ti).expect("tensor index");
                    let orig = t.data()[j];
                    t.data_mut()[j] = orig + delta;
                    let l = batch_loss(&model, prompt.as_ref(), &inst.batch);
                    model.tensors_mut().nth(ti).expect("tensor index").data_mut()[j] = orig;
                    l
                } else {
                    let p = prompt.as_mut().expect("prompt present");
                    let orig = p.values()[j];
                    p.tensor_mut().data_mut()[j] = orig + delta;
                    let l = batch_loss(&model, Some(&*p), &inst.batch);
                    prompt.as_mut().expect("prompt present").tensor_mut().data_mut()[j] = orig;
                    l
                }
            };
            let numeric = (at(eps)? - at(-eps)?) / (2.0 * eps);
            rel = rel.max(relative_error(analytic[k], numeric));
            abs = abs.max((analytic[k] - numeric).abs());
            k += 1;
        }
    }
    Ok((k, rel, abs))
}

/// Runs `instances` random instances for every backbone × head × {pai, zero}.
pub fn run_gradcheck(instances: usize, seed: u64, limits: InstanceLimits, eps: f64, tolerance: f64) -> Result<GradcheckReport> {
    let mut cases = Vec::new();
    for backbone in Backbone::ALL {
        for head in [HeadKind::LinearClassifier, HeadKind::MlpRegressor] {
            for protocol in [Protocol::Pai, Protocol::Zero] {
                for i in 0..instances {
                    let case_seed = seed
                        .wrapping_mul(1_000_003)
                        .wrapping_add((cases.len() as u64) << 8)
                        .wrapping_add(i as u64);
                    let mut inst = random_instance(backbone, head, protocol, limits, case_seed)?;
                    let (parameters, max_rel_error, max_abs_error) = check_instance(&mut inst, eps)?;
                    cases.push(GradcheckCase {
                        backbone,
                        head,
                        protocol,
                        instance: i,
                        parameters,
                        max_rel_error,
                        max_abs_error,
                    });
                }
            }
        }
    }
    let max_rel_error = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        eps,
        tolerance,
        passed: max_rel_error <= tolerance,
        cases,
        max_rel_error,
    })
}
