//! Canonical text form of a pipeline: compact JSON with sorted keys and
//! shortest round-trip floats.

use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use super::{ModuleKind, PipelineConfig, Slot, SlotHp, SLOT_COUNT, SLOT_LAYOUT};
use crate::error::{Error, Result};
use crate::ops::Switch;

pub const PIPELINE_SCHEMA: &str = "map-pipeline/1";

fn hp_value(hp: &SlotHp) -> Value {
    let v = match hp {
        SlotHp::TuneBn(h) => serde_json::to_value(h),
        SlotHp::TransPn(h) => serde_json::to_value(h),
        SlotHp::Finetune(h) => serde_json::to_value(h),
        SlotHp::PseudoLabel(h) => serde_json::to_value(h),
        SlotHp::Entropy(h) => serde_json::to_value(h),
        SlotHp::MeanTeacher(h) => serde_json::to_value(h),
        SlotHp::FixMatch(h) => serde_json::to_value(h),
    };
    v.expect("hyperparameter records serialize")
}

/// Canonical document as a JSON value.
pub fn config_value(cfg: &PipelineConfig, seed: Option<u64>) -> Value {
    let slots: Vec<Value> = cfg
        .slots()
        .iter()
        .map(|s| {
            json!({
                "module": s.hp.kind().name(),
                "switch": s.switch,
                "hp": hp_value(&s.hp),
            })
        })
        .collect();
    let mut doc = Map::new();
    doc.insert("schema".into(), PIPELINE_SCHEMA.into());
    if let Some(seed) = seed {
        doc.insert("seed".into(), seed.into());
    }
    doc.insert("slots".into(), slots.into());
    Value::Object(doc)
}

/// Single-line canonical encoding. Byte-stable for equal configs.
pub fn encode_config(cfg: &PipelineConfig) -> String {
    config_value(cfg, None).to_string()
}

/// Canonical encoding carrying the seed of the run that produced it; the seed
/// is metadata and is ignored by [`decode_config`].
pub fn encode_config_with_seed(cfg: &PipelineConfig, seed: u64) -> String {
    config_value(cfg, Some(seed)).to_string()
}

pub fn decode_config(text: &str) -> Result<PipelineConfig> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
    config_from_value(&v)
}

pub(crate) fn config_from_value(v: &Value) -> Result<PipelineConfig> {
    let doc = v.as_object().ok_or_else(|| Error::schema("$", "expected an object"))?;
    only_keys(doc, "", &["schema", "seed", "slots"])?;
    match doc.get("schema") {
        Some(Value::String(s)) if s == PIPELINE_SCHEMA => {}
        Some(other) => return Err(Error::schema("schema", format!("expected \"{PIPELINE_SCHEMA}\", found {other}"))),
        None => return Err(Error::schema("schema", "missing")),
    }
    if let Some(seed) = doc.get("seed") {
        if !seed.is_u64() {
            return Err(Error::schema("seed", "expected an unsigned integer"));
        }
    }
    let slots = doc
        .get("slots")
        .ok_or_else(|| Error::schema("slots", "missing"))?
        .as_array()
        .ok_or_else(|| Error::schema("slots", "expected an array"))?;
    if slots.len() > SLOT_COUNT {
        return Err(Error::schema(format!("slots[{SLOT_COUNT}]"), format!("unexpected slot; exactly {SLOT_COUNT} are required")));
    }
    let mut out = Vec::with_capacity(SLOT_COUNT);
    for (i, kind) in SLOT_LAYOUT.iter().enumerate() {
        let path = format!("slots[{i}]");
        let slot = slots.get(i).ok_or_else(|| Error::schema(&path, "missing slot"))?;
        out.push(decode_slot(slot, *kind, &path)?);
    }
    let cfg = PipelineConfig::from_slots(out)?;
    cfg.validate()?;
    Ok(cfg)
}

fn only_keys(obj: &Map<String, Value>, prefix: &str, allowed: &[&str]) -> Result<()> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::schema(format!("{prefix}{k}"), "unknown field"));
        }
    }
    Ok(())
}

fn decode_slot(v: &Value, kind: ModuleKind, path: &str) -> Result<Slot> {
    let obj = v.as_object().ok_or_else(|| Error::schema(path, "expected an object"))?;
    only_keys(obj, &format!("{path}."), &["module", "switch", "hp"])?;
    match obj.get("module").and_then(Value::as_str) {
        Some(m) if m == kind.name() => {}
        Some(m) => return Err(Error::schema(format!("{path}.module"), format!("expected \"{}\", found \"{m}\"", kind.name()))),
        None => return Err(Error::schema(format!("{path}.module"), "missing or not a string")),
    }
    let switch: Switch = typed(obj.get("switch"), &format!("{path}.switch"))?;
    let hp_path = format!("{path}.hp");
    let hp = obj.get("hp");
    let hp = match kind {
        ModuleKind::TuneBn => SlotHp::TuneBn(typed(hp, &hp_path)?),
        ModuleKind::TransPn => SlotHp::TransPn(typed(hp, &hp_path)?),
        ModuleKind::Finetune => SlotHp::Finetune(typed(hp, &hp_path)?),
        ModuleKind::PseudoLabel => SlotHp::PseudoLabel(typed(hp, &hp_path)?),
        ModuleKind::Entropy => SlotHp::Entropy(typed(hp, &hp_path)?),
        ModuleKind::MeanTeacher => SlotHp::MeanTeacher(typed(hp, &hp_path)?),
        ModuleKind::FixMatch => SlotHp::FixMatch(typed(hp, &hp_path)?),
    };
    Ok(Slot { switch, hp })
}

fn typed<T: DeserializeOwned>(v: Option<&Value>, path: &str) -> Result<T> {
    let v = v.ok_or_else(|| Error::schema(path, "missing"))?;
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let full = if inner == "." { path.to_string() } else { format!("{path}.{inner}") };
        Error::schema(full, e.into_inner().to_string())
    })
}
