//! Parameter groups with their own learning rates and optimiser state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelParams;
use crate::prompt::FeaturePrompt;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    /// Plain `θ ← θ − η·g`.
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub kind: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            kind: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Member {
    Model(usize),
    Prompt,
}

#[derive(Clone, Debug)]
struct Group {
    lr: f64,
    members: Vec<Member>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Group {
    fn new(lr: f64, members: Vec<Member>, model: &ModelParams, prompt: Option<&FeaturePrompt>) -> Self {
        let zeros: Vec<Vec<f64>> = members
            .iter()
            .map(|m| match m {
                Member::Model(i) => vec![0.0; model.tensors()[*i].1.numel()],
                Member::Prompt => vec![0.0; prompt.map_or(0, FeaturePrompt::len)],
            })
            .collect();
        Self {
            lr,
            members,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// Model parameters and (optionally) the feature prompt, partitioned into
/// disjoint groups that each carry a learning rate and optimiser state.
#[derive(Clone, Debug)]
pub struct ParamGroups {
    pub model: ModelParams,
    pub prompt: Option<FeaturePrompt>,
    groups: Vec<Group>,
    settings: OptimizerSettings,
}

impl ParamGroups {
    /// Model tensors under `lr_model`, prompt under `lr_prompt`.
    pub fn two_rate(
        model: ModelParams,
        prompt: Option<FeaturePrompt>,
        lr_model: f64,
        lr_prompt: f64,
        settings: OptimizerSettings,
    ) -> Result<Self> {
        check_lr(lr_model)?;
        let mut groups = vec![Group::new(lr_model, model_members(&model), &model, None)];
        if prompt.is_some() {
            check_lr(lr_prompt)?;
            groups.push(Group::new(lr_prompt, vec![Member::Prompt], &model, prompt.as_ref()));
        }
        Ok(Self {
            model,
            prompt,
            groups,
            settings,
        })
    }

    /// Every tensor in one group, traversed model first, then prompt.
    pub fn single(
        model: ModelParams,
        prompt: Option<FeaturePrompt>,
        lr: f64,
        settings: OptimizerSettings,
    ) -> Result<Self> {
        check_lr(lr)?;
        let mut members = model_members(&model);
        if prompt.is_some() {
            members.push(Member::Prompt);
        }
        let group = Group::new(lr, members, &model, prompt.as_ref());
        Ok(Self {
            model,
            prompt,
            groups: vec![group],
            settings,
        })
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn learning_rates(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.lr).collect()
    }

    pub fn settings(&self) -> OptimizerSettings {
        self.settings
    }

    pub fn zero_grads(&mut self) {
        self.model.tensors_mut().for_each(|t| t.zero_grad());
        if let Some(p) = &mut self.prompt {
            p.tensor_mut().zero_grad();
        }
    }

    pub fn into_parts(self) -> (ModelParams, Option<FeaturePrompt>) {
        (self.model, self.prompt)
    }
}

fn check_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("learning rate must be positive, got {lr}")))
    }
}

fn model_members(model: &ModelParams) -> Vec<Member> {
    (0..model.tensors().len()).map(Member::Model).collect()
}

/// One optimiser step per group with that group's learning rate, then all
/// gradients are cleared. A frozen prompt is skipped.
pub fn async_update(groups: &mut ParamGroups) -> Result<()> {
    let ParamGroups {
        model,
        prompt,
        groups: list,
        settings,
    } = groups;
    let mut tensors: Vec<&mut crate::autodiff::Tensor> = model.tensors_mut().collect();
    // Validate before touching anything so a failed step leaves no trace.
    for g in list.iter() {
        for &m in &g.members {
            let (t, name) = match m {
                Member::Model(i) => (&*tensors[i], format!("model tensor {i}")),
                Member::Prompt => match prompt.as_ref() {
                    Some(p) if !p.is_frozen() => (p.tensor(), "prompt".to_string()),
                    _ => continue,
                },
            };
            if t.requires_grad() && t.grad().is_none() {
                return Err(Error::State(format!("{name} has no gradient; run backward first")));
            }
        }
    }
    for g in list.iter_mut() {
        g.step += 1;
        for (slot, &member) in g.members.iter().enumerate() {
            let t: &mut crate::autodiff::Tensor = match member {
                Member::Model(i) => &mut *tensors[i],
                Member::Prompt => match prompt.as_mut() {
                    Some(p) if !p.is_frozen() => p.tensor_mut(),
                    _ => continue,
                },
            };
            let Some(grad) = t.take_grad() else {
                continue; // frozen model tensor
            };
            match settings.kind {
                Optimizer::Sgd => {
                    for (p, gk) in t.data_mut().iter_mut().zip(&grad) {
                        *p -= g.lr * gk;
                    }
                }
                Optimizer::Adam => {
                    let (b1, b2) = (settings.beta1, settings.beta2);
                    let c1 = 1.0 - b1.powi(g.step);
                    let c2 = 1.0 - b2.powi(g.step);
                    let (m, v) = (&mut g.m[slot], &mut g.v[slot]);
                    for (k, p) in t.data_mut().iter_mut().enumerate() {
                        let gk = grad[k];
                        m[k] = b1 * m[k] + (1.0 - b1) * gk;
                        v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                        *p -= g.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + settings.eps);
                    }
                }
            }
        }
    }
    drop(tensors);
    groups.zero_grads();
    Ok(())
}
