//! The learnable feature prompt: one scalar per feature, written into every
//! masked position of that feature and trained by the task loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::NormStats;
use crate::error::{ensure, Error, Result};

/// Half-width of the uniform initialisation range.
pub const UNIFORM_INIT_RANGE: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptInit {
    #[default]
    Zeros,
    Uniform,
    FeatureMeans,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePrompt {
    v: Tensor,
    init: PromptInit,
}

impl FeaturePrompt {
    pub fn init(strategy: PromptInit, n: usize, stats: Option<&NormStats>, seed: u64) -> Result<Self> {
        let values = match strategy {
            PromptInit::Zeros => vec![0.0; n],
            PromptInit::Uniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n)
                    .map(|_| rng.random_range(-UNIFORM_INIT_RANGE..UNIFORM_INIT_RANGE))
                    .collect()
            }
            PromptInit::FeatureMeans => {
                let stats = stats.ok_or_else(|| {
                    Error::InvalidArgument("feature-means initialisation needs normalization stats".into())
                })?;
                ensure!(
                    stats.mean.len() == n,
                    InvalidArgument,
                    "stats cover {} features, prompt has {n}",
                    stats.mean.len()
                );
                stats.mean.clone()
            }
        };
        Ok(Self {
            v: Tensor::new(&[n], values, true)?,
            init: strategy,
        })
    }

    pub fn from_values(values: Vec<f64>, init: PromptInit, frozen: bool) -> Result<Self> {
        let n = values.len();
        Ok(Self {
            v: Tensor::new(&[n], values, !frozen)?,
            init,
        })
    }

    pub fn len(&self) -> usize {
        self.v.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> &[f64] {
        self.v.data()
    }

    pub fn init_strategy(&self) -> PromptInit {
        self.init
    }

    pub fn is_frozen(&self) -> bool {
        !self.v.requires_grad()
    }

    /// Stops gradient tracking; the values can no longer change through
    /// training updates. Idempotent.
    pub fn freeze(&mut self) {
        self.v.set_requires_grad(false);
    }

    pub fn frozen(mut self) -> Self {
        self.freeze();
        self
    }

    pub fn tensor(&self) -> &Tensor {
        &self.v
    }

    pub(crate) fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.v
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.v.grad()
    }

    /// Adds `g` into the gradient slot; ignored once frozen.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        self.v.accumulate_grad(g)
    }

    /// Registers the prompt on a tape.
    pub fn bind(&self, tape: &mut Tape) -> Var {
        tape.leaf(&self.v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&PromptDoc {
            values: self.values().to_vec(),
            init: self.init,
            frozen: self.is_frozen(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PromptDoc = serde_json::from_str(text)?;
        Self::from_values(doc.values, doc.init, doc.frozen)
    }
}

#[derive(Serialize, Deserialize)]
struct PromptDoc {
    values: Vec<f64>,
    init: PromptInit,
    frozen: bool,
}

/// `X′[l,n] = X[l,n]` where observed, else `v[n]`; differentiable in both.
pub fn fill_prompt(tape: &mut Tape, x: Var, mask: &[bool], v: Var) -> Result<Var> {
    tape.masked_fill(x, mask, v)
}
