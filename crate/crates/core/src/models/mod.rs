//! Backbone encoders and task heads.
//!
//! A batch enters a backbone as one time-major matrix: row `t·B + b` holds
//! time step `t` of record `b`, so a single record is simply the `B = 1` case.
//! Rows at or beyond a record's length are padding and never influence its
//! embedding.

mod backbone;
mod checkpoint;
mod head;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::Task;
use crate::error::{ensure, Error, Result};
use crate::prompt::FeaturePrompt;

pub use backbone::{backbone_forward, positional_encoding};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use head::{head_forward, to_predictions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Rnn,
    Gru,
    Attention,
}

impl Backbone {
    pub const ALL: [Backbone; 3] = [Backbone::Rnn, Backbone::Gru, Backbone::Attention];

    pub fn name(self) -> &'static str {
        match self {
            Backbone::Rnn => "rnn",
            Backbone::Gru => "gru",
            Backbone::Attention => "attention",
        }
    }
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    LinearClassifier,
    MlpRegressor,
}

impl HeadKind {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classification => HeadKind::LinearClassifier,
            Task::Regression => HeadKind::MlpRegressor,
        }
    }

    pub fn task(self) -> Task {
        match self {
            HeadKind::LinearClassifier => Task::Classification,
            HeadKind::MlpRegressor => Task::Regression,
        }
    }
}

pub const DEFAULT_HIDDEN_DIM: usize = 32;
pub const MAX_LAYERS: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchConfig {
    pub backbone: Backbone,
    pub layers: usize,
    pub hidden_dim: usize,
    pub head: HeadKind,
    pub input_dim: usize,
}

impl ArchConfig {
    pub fn new(backbone: Backbone, head: HeadKind, input_dim: usize) -> Self {
        Self {
            backbone,
            layers: 1,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            head,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            (1..=MAX_LAYERS).contains(&self.layers),
            InvalidArgument,
            "layers must be in 1..={MAX_LAYERS}, got {}",
            self.layers
        );
        ensure!(self.hidden_dim >= 1, InvalidArgument, "hidden_dim must be positive");
        ensure!(self.input_dim >= 1, InvalidArgument, "input_dim must be positive");
        Ok(())
    }

    /// Shapes of every parameter tensor, in initialisation order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, n) = (self.hidden_dim, self.input_dim);
        let mut out = Vec::new();
        let mut push = |name: String, shape: Vec<usize>| out.push((name, shape));
        match self.backbone {
            Backbone::Rnn => {
                for l in 0..self.layers {
                    let fan_in = if l == 0 { n } else { d };
                    push(format!("rnn.{l}.w_ih"), vec![d, fan_in]);
                    push(format!("rnn.{l}.w_hh"), vec![d, d]);
                    push(format!("rnn.{l}.b"), vec![d]);
                }
            }
            Backbone::Gru => {
                for l in 0..self.layers {
                    let fan_in = if l == 0 { n } else { d };
                    for g in ["r", "z", "n"] {
                        push(format!("gru.{l}.w_{g}"), vec![d, fan_in]);
                        push(format!("gru.{l}.u_{g}"), vec![d, d]);
                        push(format!("gru.{l}.b_{g}"), vec![d]);
                    }
                }
            }
            Backbone::Attention => {
                push("attn.in.w".into(), vec![d, n]);
                push("attn.in.b".into(), vec![d]);
                for l in 0..self.layers {
                    // No key bias: it shifts every score in a row equally,
                    // which softmax ignores.
                    for p in ["q", "k", "v", "o"] {
                        push(format!("attn.{l}.w{p}"), vec![d, d]);
                        if p != "k" {
                            push(format!("attn.{l}.b{p}"), vec![d]);
                        }
                    }
                    push(format!("attn.{l}.ff1.w"), vec![d, d]);
                    push(format!("attn.{l}.ff1.b"), vec![d]);
                    push(format!("attn.{l}.ff2.w"), vec![d, d]);
                    push(format!("attn.{l}.ff2.b"), vec![d]);
                }
            }
        }
        match self.head {
            HeadKind::LinearClassifier => {
                push("head.w".into(), vec![1, d]);
                push("head.b".into(), vec![1]);
            }
            HeadKind::MlpRegressor => {
                push("head.w1".into(), vec![d, d]);
                push("head.b1".into(), vec![d]);
                push("head.w2".into(), vec![1, d]);
                push("head.b2".into(), vec![1]);
            }
        }
        out
    }
}

/// Named model parameters in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: ArchConfig,
    tensors: Vec<(String, Tensor)>,
}

impl ModelParams {
    /// Weights ~ U(−1/√fan_in, 1/√fan_in), biases zero.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = arch
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let t = if shape.len() == 2 {
                    let bound = 1.0 / (shape[1] as f64).sqrt();
                    let values = (0..shape[0] * shape[1])
                        .map(|_| rng.random_range(-bound..bound))
                        .collect();
                    Tensor::new(&shape, values, true)?
                } else {
                    Tensor::zeros(&shape, true)
                };
                Ok((name, t))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            arch: arch.clone(),
            tensors,
        })
    }

    pub(crate) fn from_parts(arch: ArchConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let expected = arch.param_shapes();
        ensure!(
            expected.len() == tensors.len()
                && expected
                    .iter()
                    .zip(&tensors)
                    .all(|((n, s), (m, t))| n == m && s.as_slice() == t.shape()),
            InvalidInput,
            "parameter tensors do not match the architecture"
        );
        Ok(Self { arch, tensors })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Registers every tensor on the tape. With `trainable = false` the leaves
    /// carry no gradient.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    tape.leaf(t)
                } else {
                    let mut c = t.clone();
                    c.set_requires_grad(false);
                    tape.leaf(&c)
                };
                (name.clone(), v)
            })
            .collect();
        BoundParams { vars }
    }

    /// Adds the tape gradients of `bound` into each tensor's grad buffer.
    pub fn collect_grads(&mut self, tape: &Tape, bound: &BoundParams) -> Result<()> {
        for (name, t) in self.tensors.iter_mut() {
            let v = bound.get(name)?;
            if let Some(g) = tape.grad(v) {
                t.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and value bits.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.tensors {
            h.update(name.as_bytes());
            for &s in t.shape() {
                h.update((s as u64).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub fn init_model(arch: &ArchConfig, seed: u64) -> Result<ModelParams> {
    ModelParams::init(arch, seed)
}

/// Parameter tensors registered on a tape, looked up by name.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: HashMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::State(format!("parameter {name} is not bound")))
    }
}

/// Time-major batch layout: `lengths[b]` valid steps for record `b`, `steps`
/// rows per record in the input matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchLayout {
    pub lengths: Vec<usize>,
    pub steps: usize,
}

impl BatchLayout {
    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    pub fn single(length: usize, steps: usize) -> Self {
        Self {
            lengths: vec![length],
            steps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    pub model_count: usize,
    pub prompt_count: usize,
    pub ratio: f64,
}

pub fn count_parameters(params: &ModelParams, prompt: Option<&FeaturePrompt>) -> ParamCount {
    let model_count = params.count();
    let prompt_count = prompt.map_or(0, FeaturePrompt::len);
    ParamCount {
        model_count,
        prompt_count,
        ratio: if model_count == 0 {
            0.0
        } else {
            prompt_count as f64 / model_count as f64
        },
    }
}
