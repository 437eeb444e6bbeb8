//! Fixed-order chains of switchable operators.
//!
//! Slot order: TuneBN, TransPN, TuneBN, Finetune, TuneBN, PseudoLabel,
//! Entropy, MeanTeacher, FixMatch, TuneBN, TransPN. Every slot draws its
//! randomness from `derive(seed, slot_index)`, so switching a slot off never
//! shifts the randomness of the others.

mod codec;

pub use codec::{config_value, decode_config, encode_config, encode_config_with_seed, PIPELINE_SCHEMA};
pub(crate) use codec::config_from_value;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{self, AdaptTask, EntropyHp, FinetuneHp, FixMatchHp, MeanTeacherHp, PseudoLabelHp, Switch, TransPnHp, TuneBnHp};
use crate::rng::derive;
use crate::tensor::Real;
use crate::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    TuneBn,
    TransPn,
    Finetune,
    PseudoLabel,
    Entropy,
    MeanTeacher,
    #[serde(rename = "fixmatch")]
    FixMatch,
}

impl ModuleKind {
    pub fn name(self) -> &'static str {
        match self {
            ModuleKind::TuneBn => "tune_bn",
            ModuleKind::TransPn => "trans_pn",
            ModuleKind::Finetune => "finetune",
            ModuleKind::PseudoLabel => "pseudo_label",
            ModuleKind::Entropy => "entropy",
            ModuleKind::MeanTeacher => "mean_teacher",
            ModuleKind::FixMatch => "fixmatch",
        }
    }

    pub fn default_hp(self) -> SlotHp {
        match self {
            ModuleKind::TuneBn => SlotHp::TuneBn(TuneBnHp::default()),
            ModuleKind::TransPn => SlotHp::TransPn(TransPnHp::default()),
            ModuleKind::Finetune => SlotHp::Finetune(FinetuneHp::default()),
            ModuleKind::PseudoLabel => SlotHp::PseudoLabel(PseudoLabelHp::default()),
            ModuleKind::Entropy => SlotHp::Entropy(EntropyHp::default()),
            ModuleKind::MeanTeacher => SlotHp::MeanTeacher(MeanTeacherHp::default()),
            ModuleKind::FixMatch => SlotHp::FixMatch(FixMatchHp::default()),
        }
    }
}

pub const SLOT_COUNT: usize = 11;

pub const SLOT_LAYOUT: [ModuleKind; SLOT_COUNT] = [
    ModuleKind::TuneBn,
    ModuleKind::TransPn,
    ModuleKind::TuneBn,
    ModuleKind::Finetune,
    ModuleKind::TuneBn,
    ModuleKind::PseudoLabel,
    ModuleKind::Entropy,
    ModuleKind::MeanTeacher,
    ModuleKind::FixMatch,
    ModuleKind::TuneBn,
    ModuleKind::TransPn,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlotHp {
    TuneBn(TuneBnHp),
    TransPn(TransPnHp),
    Finetune(FinetuneHp),
    PseudoLabel(PseudoLabelHp),
    Entropy(EntropyHp),
    MeanTeacher(MeanTeacherHp),
    FixMatch(FixMatchHp),
}

impl SlotHp {
    pub fn kind(&self) -> ModuleKind {
        match self {
            SlotHp::TuneBn(_) => ModuleKind::TuneBn,
            SlotHp::TransPn(_) => ModuleKind::TransPn,
            SlotHp::Finetune(_) => ModuleKind::Finetune,
            SlotHp::PseudoLabel(_) => ModuleKind::PseudoLabel,
            SlotHp::Entropy(_) => ModuleKind::Entropy,
            SlotHp::MeanTeacher(_) => ModuleKind::MeanTeacher,
            SlotHp::FixMatch(_) => ModuleKind::FixMatch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SlotHp::TuneBn(h) => h.validate(),
            SlotHp::TransPn(h) => h.validate(),
            SlotHp::Finetune(h) => h.validate(),
            SlotHp::PseudoLabel(h) => h.validate(),
            SlotHp::Entropy(h) => h.validate(),
            SlotHp::MeanTeacher(h) => h.validate(),
            SlotHp::FixMatch(h) => h.validate(),
        }
    }

    /// Runs the operator this record parameterizes.
    pub fn apply<T: Real>(&self, model: &Model<T>, task: &AdaptTask<T>, seed: u64) -> Result<Model<T>> {
        match self {
            SlotHp::TuneBn(h) => ops::tune_bn(model, task, h, seed),
            SlotHp::TransPn(h) => ops::trans_pn(model, task, h),
            SlotHp::Finetune(h) => ops::finetune(model, task, h, seed),
            SlotHp::PseudoLabel(h) => ops::ssl_pseudo_label(model, task, h, seed),
            SlotHp::Entropy(h) => ops::ssl_entropy(model, task, h, seed),
            SlotHp::MeanTeacher(h) => ops::ssl_mean_teacher(model, task, h, seed),
            SlotHp::FixMatch(h) => ops::ssl_fixmatch(model, task, h, seed),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slot {
    pub switch: Switch,
    pub hp: SlotHp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// TuneBN followed by prototypes.
    Pn,
    /// TuneBN followed by finetuning.
    Ft,
}

impl Preset {
    pub fn slots(self) -> &'static [usize] {
        match self {
            Preset::Pn => &[0, 1],
            Preset::Ft => &[0, 3],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Pn => "PN",
            Preset::Ft => "FT",
        }
    }
}

/// Eleven slots in the fixed layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    slots: Vec<Slot>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::all_off()
    }
}

impl PipelineConfig {
    /// Every slot off, default hyperparameters.
    pub fn all_off() -> Self {
        Self {
            slots: SLOT_LAYOUT
                .iter()
                .map(|k| Slot {
                    switch: Switch::Off,
                    hp: k.default_hp(),
                })
                .collect(),
        }
    }

    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self::all_off();
        for &i in preset.slots() {
            cfg.slots[i].switch = Switch::On;
        }
        cfg
    }

    pub fn from_slots(slots: Vec<Slot>) -> Result<Self> {
        if slots.len() != SLOT_COUNT {
            return Err(Error::schema("slots", format!("expected {SLOT_COUNT} slots, found {}", slots.len())));
        }
        for (i, (s, k)) in slots.iter().zip(SLOT_LAYOUT).enumerate() {
            if s.hp.kind() != k {
                return Err(Error::schema(format!("slots[{i}].module"), format!("expected {}, found {}", k.name(), s.hp.kind().name())));
            }
        }
        Ok(Self { slots })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, i: usize) -> &Slot {
        &self.slots[i]
    }

    pub fn set_switch(&mut self, i: usize, on: bool) {
        self.slots[i].switch = Switch::from_bool(on);
    }

    /// Replaces a slot's hyperparameters; the module kind must match the layout.
    pub fn set_hp(&mut self, i: usize, hp: SlotHp) -> Result<()> {
        if hp.kind() != SLOT_LAYOUT[i] {
            return Err(Error::schema(format!("slots[{i}].module"), format!("expected {}", SLOT_LAYOUT[i].name())));
        }
        self.slots[i].hp = hp;
        Ok(())
    }

    pub fn enabled(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.switch.is_on()).map(|(i, _)| i)
    }

    /// The on/off pattern as an 11-bit mask, bit `i` for slot `i`.
    pub fn switch_mask(&self) -> u16 {
        self.enabled().fold(0, |m, i| m | 1 << i)
    }

    /// Range-checks every slot, enabled or not.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.slots.iter().enumerate() {
            s.hp.validate().map_err(|e| match e {
                Error::OutOfRange { field, value, low, high } => {
                    Error::schema(format!("slots[{i}].hp.{field}"), format!("{value} outside [{low}, {high}]"))
                }
                other => other,
            })?;
        }
        Ok(())
    }
}

/// Threads `model` through the enabled slots in order.
pub fn run_pipeline<T: Real>(model: &Model<T>, task: &AdaptTask<T>, cfg: &PipelineConfig, seed: u64) -> Result<Model<T>> {
    let mut current = model.clone();
    for i in cfg.enabled() {
        let hp = &cfg.slots[i].hp;
        current = hp.apply(&current, task, derive(seed, i as u64)).map_err(|e| Error::Slot {
            slot: i,
            module: hp.kind().name(),
            source: Box::new(e),
        })?;
    }
    Ok(current)
}

/// Number of on/off patterns over the standard layout.
pub fn enumerate_switch_space() -> u64 {
    switch_space_size(SLOT_COUNT)
}

/// `2^n` on/off patterns for an `n`-slot chain.
pub fn switch_space_size(n: usize) -> u64 {
    1u64 << n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::testutil;

    #[test]
    fn switch_space() {
        assert_eq!(enumerate_switch_space(), 2048);
        assert_eq!(switch_space_size(1), 2);
        assert_eq!(switch_space_size(3), 8);
        let distinct: std::collections::HashSet<u16> = (0..2048u16)
            .map(|m| {
                let mut c = PipelineConfig::all_off();
                for i in 0..SLOT_COUNT {
                    c.set_switch(i, m >> i & 1 == 1);
                }
                c.switch_mask()
            })
            .collect();
        assert_eq!(distinct.len(), 2048);
    }

    #[test]
    fn all_off_is_identity() {
        let task = testutil::task::<f32>(3, 2, 4, 5, 1);
        let m = testutil::model::<f32>(5, 3, 2);
        assert_eq!(run_pipeline(&m, &task, &PipelineConfig::all_off(), 7).unwrap(), m);
    }

    #[test]
    fn presets_enable_only_their_slots() {
        let pn = PipelineConfig::preset(Preset::Pn);
        assert_eq!(pn.enabled().collect::<Vec<_>>(), [0, 1]);
        let ft = PipelineConfig::preset(Preset::Ft);
        assert_eq!(ft.enabled().map(|i| SLOT_LAYOUT[i]).collect::<Vec<_>>(), [ModuleKind::TuneBn, ModuleKind::Finetune]);
    }

    #[test]
    fn slot_errors_carry_index() {
        let task = testutil::task::<f32>(3, 2, 0, 5, 1);
        let m = testutil::model::<f32>(5, 3, 2);
        let err = run_pipeline(&m, &task, &PipelineConfig::preset(Preset::Pn), 0).unwrap_err();
        assert!(matches!(err, Error::Slot { slot: 0, module: "tune_bn", .. }), "{err}");
    }

    #[test]
    fn layout_mismatch_rejected() {
        let mut cfg = PipelineConfig::all_off();
        assert!(cfg.set_hp(0, ModuleKind::Finetune.default_hp()).is_err());
        let mut slots = cfg.slots().to_vec();
        slots.swap(0, 1);
        assert!(PipelineConfig::from_slots(slots).is_err());
    }
}
