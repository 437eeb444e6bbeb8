//! Hyperparameter records, one per operator, with the documented ranges.

use serde::{Deserialize, Serialize};

use super::Augmentation;
use crate::error::Result;
use crate::model::{check_range as check, OptimizerKind, OptimizerSpec};
use crate::model::{DECAY_RANGE as DECAY, LR_RANGE as LR, MOMENTUM_RANGE as MOMENTUM};

fn check_int(field: &str, value: u32, (low, high): (u32, u32)) -> Result<()> {
    check(field, f64::from(value), (f64::from(low), f64::from(high)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }

    pub fn from_bool(on: bool) -> Self {
        if on {
            Switch::On
        } else {
            Switch::Off
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneHp {
    pub reinitialize: bool,
    pub optimizer: OptimizerKind,
    pub aug: Augmentation,
    pub lr_classifier: f64,
    pub lr_embed: f64,
    /// Fraction of optimizer steps after which both learning rates drop to 0.1×.
    pub step: f64,
    pub decay: f64,
    pub momentum: f64,
    pub epochs: u32,
    pub batch_size: u32,
}

impl Default for FinetuneHp {
    fn default() -> Self {
        Self {
            reinitialize: true,
            optimizer: OptimizerKind::Sgd,
            aug: Augmentation::Normal,
            lr_classifier: 0.01,
            lr_embed: 0.003,
            step: 0.7,
            decay: 1e-4,
            momentum: 0.9,
            epochs: 30,
            batch_size: 16,
        }
    }
}

impl FinetuneHp {
    pub fn optimizer_spec(&self) -> OptimizerSpec {
        OptimizerSpec {
            kind: self.optimizer,
            lr_classifier: self.lr_classifier,
            lr_embed: self.lr_embed,
            momentum: self.momentum,
            decay: self.decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check("lr_classifier", self.lr_classifier, LR)?;
        check("lr_embed", self.lr_embed, LR)?;
        check("step", self.step, (0.2, 1.0))?;
        check("decay", self.decay, DECAY)?;
        check("momentum", self.momentum, MOMENTUM)?;
        check_int("epochs", self.epochs, (1, 90))?;
        check_int("batch_size", self.batch_size, (8, 48))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransPnHp {
    pub p: f64,
    pub tau: f64,
    pub cipa_switch: Switch,
    pub cipa_rounds: u32,
    pub cipa_unlabeled_weight: f64,
}

impl Default for TransPnHp {
    fn default() -> Self {
        Self {
            p: 1.0,
            tau: 10.0,
            cipa_switch: Switch::Off,
            cipa_rounds: 4,
            cipa_unlabeled_weight: 1.0,
        }
    }
}

impl TransPnHp {
    pub fn validate(&self) -> Result<()> {
        check("p", self.p, (0.2, 4.0))?;
        check("tau", self.tau, (5.0, 32.0))?;
        check_int("cipa_rounds", self.cipa_rounds, (1, 32))?;
        check("cipa_unlabeled_weight", self.cipa_unlabeled_weight, (0.001, 10.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneBnHp {
    pub momentum_entry: f64,
    pub iterations: u32,
    pub batch_size: u32,
}

impl Default for TuneBnHp {
    fn default() -> Self {
        Self {
            momentum_entry: 0.1,
            iterations: 20,
            batch_size: 32,
        }
    }
}

impl TuneBnHp {
    pub fn validate(&self) -> Result<()> {
        check("momentum_entry", self.momentum_entry, (1e-5, 1.0))?;
        check_int("iterations", self.iterations, (1, 50))?;
        check_int("batch_size", self.batch_size, (8, 48))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PseudoLabelHp {
    pub pseudo_weight: f64,
    pub threshold: f64,
    pub lr: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub aug_labeled: Augmentation,
    pub aug_unlabeled: Augmentation,
}

impl Default for PseudoLabelHp {
    fn default() -> Self {
        Self {
            pseudo_weight: 0.5,
            threshold: 0.9,
            lr: 1e-3,
            epochs: 5,
            batch_size: 16,
            aug_labeled: Augmentation::Normal,
            aug_unlabeled: Augmentation::Weak1,
        }
    }
}

impl PseudoLabelHp {
    pub fn validate(&self) -> Result<()> {
        check("pseudo_weight", self.pseudo_weight, (0.0, 1.0))?;
        check("threshold", self.threshold, (0.5, 1.0))?;
        check("lr", self.lr, LR)?;
        check_int("epochs", self.epochs, (1, 20))?;
        check_int("batch_size", self.batch_size, (8, 48))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyHp {
    pub entropy_weight: f64,
    /// Upper bound on normalized entropy (entropy / ln n_way) of included rows.
    pub threshold: f64,
    pub lr: f64,
    pub epochs: u32,
    pub batch_size: u32,
}

impl Default for EntropyHp {
    fn default() -> Self {
        Self {
            entropy_weight: 0.3,
            threshold: 0.3,
            lr: 1e-3,
            epochs: 5,
            batch_size: 16,
        }
    }
}

impl EntropyHp {
    pub fn validate(&self) -> Result<()> {
        check("entropy_weight", self.entropy_weight, (0.0, 1.0))?;
        check("threshold", self.threshold, (0.0, 0.6))?;
        check("lr", self.lr, LR)?;
        check_int("epochs", self.epochs, (1, 20))?;
        check_int("batch_size", self.batch_size, (8, 48))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanTeacherHp {
    pub reinitialize: bool,
    pub optimizer: OptimizerKind,
    pub pseudo_weight: f64,
    pub threshold: f64,
    pub lr: f64,
    pub decay: f64,
    pub momentum: f64,
    pub epochs: u32,
    pub batch_size: u32,
    pub aug_labeled: Augmentation,
    pub aug_unlabeled: Augmentation,
}

impl Default for MeanTeacherHp {
    fn default() -> Self {
        Self {
            reinitialize: false,
            optimizer: OptimizerKind::Adam,
            pseudo_weight: 0.5,
            threshold: 0.8,
            lr: 1e-3,
            decay: 1e-5,
            momentum: 0.9,
            epochs: 5,
            batch_size: 16,
            aug_labeled: Augmentation::Normal,
            aug_unlabeled: Augmentation::Weak2,
        }
    }
}

impl MeanTeacherHp {
    pub fn optimizer_spec(&self) -> OptimizerSpec {
        OptimizerSpec {
            kind: self.optimizer,
            lr_classifier: self.lr,
            lr_embed: self.lr,
            momentum: self.momentum,
            decay: self.decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check("pseudo_weight", self.pseudo_weight, (0.0, 1.0))?;
        check("threshold", self.threshold, (0.5, 1.0))?;
        check("lr", self.lr, LR)?;
        check("decay", self.decay, DECAY)?;
        check("momentum", self.momentum, MOMENTUM)?;
        check_int("epochs", self.epochs, (1, 20))?;
        check_int("batch_size", self.batch_size, (8, 48))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixMatchHp {
    pub reinitialize: bool,
    pub optimizer: OptimizerKind,
    pub pseudo_weight: f64,
    pub threshold: f64,
    pub lr: f64,
    pub decay: f64,
    pub momentum: f64,
    pub epochs: u32,
    pub batch_size: u32,
    /// `r` in a labeled:unlabeled ratio of `1:r`.
    pub unlabeled_ratio: u32,
    /// Pseudo-labels come from an EMA teacher instead of the student.
    pub teacher: Switch,
}

impl Default for FixMatchHp {
    fn default() -> Self {
        Self {
            reinitialize: false,
            optimizer: OptimizerKind::Adam,
            pseudo_weight: 1.0,
            threshold: 0.9,
            lr: 1e-3,
            decay: 1e-5,
            momentum: 0.9,
            epochs: 5,
            batch_size: 16,
            unlabeled_ratio: 3,
            teacher: Switch::Off,
        }
    }
}

impl FixMatchHp {
    pub fn optimizer_spec(&self) -> OptimizerSpec {
        OptimizerSpec {
            kind: self.optimizer,
            lr_classifier: self.lr,
            lr_embed: self.lr,
            momentum: self.momentum,
            decay: self.decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check("pseudo_weight", self.pseudo_weight, (0.0, 1.0))?;
        check("threshold", self.threshold, (0.5, 1.0))?;
        check("lr", self.lr, LR)?;
        check("decay", self.decay, DECAY)?;
        check("momentum", self.momentum, MOMENTUM)?;
        check_int("epochs", self.epochs, (1, 20))?;
        check_int("batch_size", self.batch_size, (8, 48))?;
        check_int("unlabeled_ratio", self.unlabeled_ratio, (1, 10))
    }
}
