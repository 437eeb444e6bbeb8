use serde::{Deserialize, Serialize};

use super::{Gradients, Model, ParamGroup};
use crate::error::{Error, Result};
use crate::tensor::Real;

const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Optimizer choice and its step sizes. `momentum` is the SGD momentum and
/// doubles as Adam's first-moment decay. Weight decay is decoupled: it shrinks
/// parameters directly, `p -= lr · decay · p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub lr_classifier: f64,
    pub lr_embed: f64,
    pub momentum: f64,
    pub decay: f64,
}

pub const LR_RANGE: (f64, f64) = (1e-5, 1e-1);
pub const MOMENTUM_RANGE: (f64, f64) = (0.7, 0.99);
pub const DECAY_RANGE: (f64, f64) = (1e-7, 1e-3);

pub(crate) fn check_range(field: &str, value: f64, (low, high): (f64, f64)) -> Result<()> {
    if !(low..=high).contains(&value) {
        return Err(Error::OutOfRange {
            field: field.to_string(),
            value,
            low,
            high,
        });
    }
    Ok(())
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        check_range("lr_classifier", self.lr_classifier, LR_RANGE)?;
        check_range("lr_embed", self.lr_embed, LR_RANGE)?;
        check_range("momentum", self.momentum, MOMENTUM_RANGE)?;
        check_range("decay", self.decay, DECAY_RANGE)
    }

    fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Classifier => self.lr_classifier,
            ParamGroup::Embed => self.lr_embed,
        }
    }
}

/// Per-tensor optimizer memory (velocity for SGD, first/second moments for Adam).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState<T = f32> {
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    steps: u64,
}

impl<T: Real> OptimizerState<T> {
    /// Zeroed state matching the given tensor sizes.
    pub fn for_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let first: Vec<Vec<T>> = sizes.into_iter().map(|n| vec![T::zero(); n]).collect();
        Self {
            second: first.clone(),
            first,
            steps: 0,
        }
    }

    pub fn for_model(model: &Model<T>) -> Self {
        Self::for_sizes(model.params().into_iter().map(|(_, p)| p.len()))
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of `params` with `grads`; `lr_scale` multiplies both learning rates.
    pub fn apply(
        &mut self,
        params: Vec<(ParamGroup, &mut [T])>,
        grads: &[Vec<T>],
        spec: &OptimizerSpec,
        lr_scale: f64,
    ) -> Result<()> {
        if self.first.len() != params.len() {
            return Err(Error::UninitializedState {
                expected: params.len(),
                actual: self.first.len(),
            });
        }
        if grads.len() != params.len() {
            return Err(Error::shape("gradient tensors", params.len(), grads.len()));
        }
        self.steps += 1;
        let mu = T::lit(spec.momentum);
        let b2 = T::lit(ADAM_BETA2);
        let eps = T::lit(ADAM_EPS);
        let bias1 = T::lit(1.0 - spec.momentum.powi(self.steps as i32));
        let bias2 = T::lit(1.0 - ADAM_BETA2.powi(self.steps as i32));
        for (k, (group, p)) in params.into_iter().enumerate() {
            let g = &grads[k];
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            if m.len() != p.len() || g.len() != p.len() {
                return Err(Error::UninitializedState {
                    expected: p.len(),
                    actual: m.len(),
                });
            }
            let lr = T::lit(spec.lr(group) * lr_scale);
            let shrink = lr * T::lit(spec.decay);
            match spec.kind {
                OptimizerKind::Sgd => {
                    for i in 0..p.len() {
                        m[i] = mu * m[i] + g[i];
                        p[i] = p[i] - lr * m[i] - shrink * p[i];
                    }
                }
                OptimizerKind::Adam => {
                    for i in 0..p.len() {
                        m[i] = mu * m[i] + (T::one() - mu) * g[i];
                        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                        let mhat = m[i] / bias1;
                        let vhat = v[i] / bias2;
                        p[i] = p[i] - lr * mhat / (vhat.sqrt() + eps) - shrink * p[i];
                    }
                }
            }
        }
        Ok(())
    }

    /// Convenience wrapper over [`OptimizerState::apply`] for a whole model.
    pub fn step(&mut self, model: &mut Model<T>, grads: &Gradients<T>, spec: &OptimizerSpec, lr_scale: f64) -> Result<()> {
        self.apply(model.params_mut(), &grads.tensors, spec, lr_scale)
    }
}
