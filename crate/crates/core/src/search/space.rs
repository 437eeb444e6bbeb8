use rand::Rng as _;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::pipeline::{config_from_value, config_value, ModuleKind, PipelineConfig, SLOT_LAYOUT};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum DimKind {
    /// Index into the listed JSON values.
    Categorical(Vec<Value>),
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
    IntUniform { low: i64, high: i64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dimension {
    pub name: String,
    pub kind: DimKind,
}

impl Dimension {
    /// Bounds of the space the optimizer works in: log for log-uniform,
    /// half-unit padding for integers, `[0, K)` for categoricals.
    pub fn internal_bounds(&self) -> (f64, f64) {
        match &self.kind {
            DimKind::Categorical(c) => (0.0, c.len() as f64),
            DimKind::Uniform { low, high } => (*low, *high),
            DimKind::LogUniform { low, high } => (low.ln(), high.ln()),
            DimKind::IntUniform { low, high } => (*low as f64 - 0.5, *high as f64 + 0.5),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match &self.kind {
            DimKind::Categorical(c) => rng.random_range(0..c.len()) as f64,
            DimKind::Uniform { low, high } => rng.random_range(*low..=*high),
            DimKind::LogUniform { low, high } => rng.random_range(low.ln()..=high.ln()).exp(),
            DimKind::IntUniform { low, high } => rng.random_range(*low..=*high) as f64,
        }
    }

    /// Maps an internal-space coordinate back to a legal value.
    pub fn from_internal(&self, x: f64) -> f64 {
        match &self.kind {
            DimKind::Categorical(c) => x.floor().clamp(0.0, c.len() as f64 - 1.0),
            DimKind::Uniform { low, high } => x.clamp(*low, *high),
            DimKind::LogUniform { low, high } => x.exp().clamp(*low, *high),
            DimKind::IntUniform { low, high } => x.round().clamp(*low as f64, *high as f64),
        }
    }

    pub fn to_internal(&self, v: f64) -> f64 {
        match &self.kind {
            DimKind::LogUniform { .. } => v.ln(),
            _ => v,
        }
    }

    fn to_json(&self, v: f64) -> Value {
        match &self.kind {
            DimKind::Categorical(c) => c[v as usize].clone(),
            DimKind::IntUniform { .. } => Value::from(v as i64),
            _ => Value::from(v),
        }
    }

    fn from_json(&self, v: &Value) -> Option<f64> {
        match &self.kind {
            DimKind::Categorical(c) => c.iter().position(|x| x == v).map(|i| i as f64),
            DimKind::IntUniform { .. } => v.as_i64().map(|i| i as f64),
            _ => v.as_f64(),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        match &self.kind {
            DimKind::Categorical(c) => v.fract() == 0.0 && (0.0..c.len() as f64).contains(&v),
            DimKind::Uniform { low, high } | DimKind::LogUniform { low, high } => (*low..=*high).contains(&v),
            DimKind::IntUniform { low, high } => v.fract() == 0.0 && (*low as f64..=*high as f64).contains(&v),
        }
    }
}

/// One value per dimension, in dimension order.
pub type Point = Vec<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

fn cat(values: &[&str]) -> DimKind {
    DimKind::Categorical(values.iter().map(|s| Value::from(*s)).collect())
}

fn boolean() -> DimKind {
    DimKind::Categorical(vec![Value::from(true), Value::from(false)])
}

fn uni(low: f64, high: f64) -> DimKind {
    DimKind::Uniform { low, high }
}

fn log(low: f64, high: f64) -> DimKind {
    DimKind::LogUniform { low, high }
}

fn int(low: i64, high: i64) -> DimKind {
    DimKind::IntUniform { low, high }
}

const AUGS: [&str; 6] = ["norm", "normal", "weak1", "weak2", "strong1", "strong2"];
const SWITCH: [&str; 2] = ["on", "off"];

fn module_dims(kind: ModuleKind) -> Vec<(&'static str, DimKind)> {
    let lr = || log(1e-5, 1e-1);
    let decay = || log(1e-7, 1e-3);
    let momentum = || uni(0.7, 0.99);
    let optimizer = || cat(&["sgd", "adam"]);
    match kind {
        ModuleKind::TuneBn => vec![("momentum_entry", log(1e-5, 1.0)), ("iterations", int(1, 50)), ("batch_size", int(8, 48))],
        ModuleKind::TransPn => vec![
            ("p", uni(0.2, 4.0)),
            ("tau", uni(5.0, 32.0)),
            ("cipa_switch", cat(&SWITCH)),
            ("cipa_rounds", int(1, 32)),
            ("cipa_unlabeled_weight", log(0.001, 10.0)),
        ],
        ModuleKind::Finetune => vec![
            ("reinitialize", boolean()),
            ("optimizer", optimizer()),
            ("aug", cat(&AUGS)),
            ("lr_classifier", lr()),
            ("lr_embed", lr()),
            ("step", uni(0.2, 1.0)),
            ("decay", decay()),
            ("momentum", momentum()),
            ("epochs", int(1, 90)),
            ("batch_size", int(8, 48)),
        ],
        ModuleKind::PseudoLabel => vec![
            ("pseudo_weight", uni(0.0, 1.0)),
            ("threshold", uni(0.5, 1.0)),
            ("lr", lr()),
            ("epochs", int(1, 20)),
            ("batch_size", int(8, 48)),
            ("aug_labeled", cat(&AUGS)),
            ("aug_unlabeled", cat(&AUGS)),
        ],
        ModuleKind::Entropy => vec![
            ("entropy_weight", uni(0.0, 1.0)),
            ("threshold", uni(0.0, 0.6)),
            ("lr", lr()),
            ("epochs", int(1, 20)),
            ("batch_size", int(8, 48)),
        ],
        ModuleKind::MeanTeacher => vec![
            ("reinitialize", boolean()),
            ("optimizer", optimizer()),
            ("pseudo_weight", uni(0.0, 1.0)),
            ("threshold", uni(0.5, 1.0)),
            ("lr", lr()),
            ("decay", decay()),
            ("momentum", momentum()),
            ("epochs", int(1, 20)),
            ("batch_size", int(8, 48)),
            ("aug_labeled", cat(&AUGS)),
            ("aug_unlabeled", cat(&AUGS)),
        ],
        ModuleKind::FixMatch => vec![
            ("reinitialize", boolean()),
            ("optimizer", optimizer()),
            ("pseudo_weight", uni(0.0, 1.0)),
            ("threshold", uni(0.5, 1.0)),
            ("lr", lr()),
            ("decay", decay()),
            ("momentum", momentum()),
            ("epochs", int(1, 20)),
            ("batch_size", int(8, 48)),
            ("unlabeled_ratio", int(1, 10)),
            ("teacher", cat(&SWITCH)),
        ],
    }
}

fn slot_prefix(i: usize) -> String {
    format!("s{i:02}")
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::EmptySpace);
        }
        let mut names: Vec<&str> = dims.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate dimension {}", w[0])));
        }
        Ok(Self { dims })
    }

    /// Every switch and hyperparameter of the 11-slot layout.
    pub fn pipeline() -> Self {
        let mut dims = Vec::new();
        for (i, module) in SLOT_LAYOUT.iter().enumerate() {
            let p = slot_prefix(i);
            dims.push(Dimension {
                name: format!("{p}.switch"),
                kind: cat(&SWITCH),
            });
            for (field, kind) in module_dims(*module) {
                dims.push(Dimension {
                    name: format!("{p}.{}.{field}", module.name()),
                    kind,
                });
            }
        }
        Self { dims }
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn sample(&self, rng: &mut Rng) -> Point {
        self.dims.iter().map(|d| d.sample(rng)).collect()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.len() == self.dims.len() && self.dims.iter().zip(p).all(|(d, &v)| d.contains(v))
    }

    /// Builds the pipeline a point of [`SearchSpace::pipeline`] describes.
    pub fn to_config(&self, p: &Point) -> Result<PipelineConfig> {
        let mut doc = config_value(&PipelineConfig::all_off(), None);
        for (d, &v) in self.dims.iter().zip(p) {
            let (slot, rest) = split_name(&d.name)?;
            let entry = &mut doc["slots"][slot];
            match rest.split_once('.') {
                None => entry[rest] = d.to_json(v),
                Some((_, field)) => entry["hp"][field] = d.to_json(v),
            }
        }
        config_from_value(&doc)
    }

    /// The point of a pipeline in [`SearchSpace::pipeline`].
    pub fn from_config(&self, cfg: &PipelineConfig) -> Result<Point> {
        let doc = config_value(cfg, None);
        self.dims
            .iter()
            .map(|d| {
                let (slot, rest) = split_name(&d.name)?;
                let entry = &doc["slots"][slot];
                let v = match rest.split_once('.') {
                    None => &entry[rest],
                    Some((_, field)) => &entry["hp"][field],
                };
                d.from_json(v).ok_or_else(|| Error::schema(&d.name, format!("value {v} not in dimension")))
            })
            .collect()
    }
}

fn split_name(name: &str) -> Result<(usize, &str)> {
    let (slot, rest) = name.split_once('.').ok_or_else(|| Error::schema(name, "not a pipeline dimension"))?;
    let idx = slot
        .strip_prefix('s')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::schema(name, "not a pipeline dimension"))?;
    Ok((idx, rest))
}

/// Flattened `slot.path → value` view of a pipeline document, for tests and
/// diagnostics.
pub fn flatten_config(cfg: &PipelineConfig) -> Map<String, Value> {
    let doc = config_value(cfg, None);
    let mut out = Map::new();
    for (i, slot) in doc["slots"].as_array().into_iter().flatten().enumerate() {
        let p = slot_prefix(i);
        out.insert(format!("{p}.switch"), slot["switch"].clone());
        let module = slot["module"].as_str().unwrap_or_default();
        for (k, v) in slot["hp"].as_object().into_iter().flatten() {
            out.insert(format!("{p}.{module}.{k}"), v.clone());
        }
    }
    out
}
