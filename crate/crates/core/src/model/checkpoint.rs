//! `map-model/1` checkpoint documents: JSON with base64 little-endian f32 arrays.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{Activation, BatchNorm, Dense, EncoderLayer, Head, Model, PowerScale, PrototypeHead};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MODEL_SCHEMA: &str = "map-model/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NormDoc {
    running_mean: TensorDoc,
    running_var: TensorDoc,
    gamma: TensorDoc,
    beta: TensorDoc,
    momentum: f32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    weight: TensorDoc,
    bias: TensorDoc,
    norm: Option<NormDoc>,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum HeadDoc {
    Linear { weight: TensorDoc, bias: TensorDoc },
    Prototype { prototypes: TensorDoc, tau: f32 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema: String,
    seed: Option<u64>,
    input_width: usize,
    layers: Vec<LayerDoc>,
    power_scale: Option<f32>,
    head: HeadDoc,
}

fn encode(shape: Vec<usize>, values: &[f32]) -> TensorDoc {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    TensorDoc {
        shape,
        data: STANDARD.encode(bytes),
    }
}

fn decode(doc: &TensorDoc, path: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(&doc.data)
        .map_err(|e| Error::schema(path, format!("bad base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::schema(path, "byte length is not a multiple of 4"));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let expected: usize = doc.shape.iter().product();
    if values.len() != expected {
        return Err(Error::schema(path, format!("shape {:?} needs {expected} values, found {}", doc.shape, values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::schema(path, "non-finite value"));
    }
    Ok(values)
}

fn decode_matrix(doc: &TensorDoc, path: &str) -> Result<Matrix<f32>> {
    if doc.shape.len() != 2 {
        return Err(Error::schema(path, "expected a rank-2 shape"));
    }
    let v = decode(doc, path)?;
    Matrix::new(doc.shape[0], doc.shape[1], v)
}

fn dense_docs(d: &Dense<f32>) -> (TensorDoc, TensorDoc) {
    (
        encode(vec![d.weight.rows(), d.weight.cols()], d.weight.as_slice()),
        encode(vec![d.bias.len()], &d.bias),
    )
}

/// Serializes a model; `seed` records the root seed that produced it.
pub fn write_checkpoint(model: &Model<f32>, seed: Option<u64>) -> String {
    let layers = model
        .layers
        .iter()
        .map(|l| {
            let (weight, bias) = dense_docs(&l.dense);
            LayerDoc {
                weight,
                bias,
                norm: l.norm.as_ref().map(|bn| NormDoc {
                    running_mean: encode(vec![bn.width()], &bn.running_mean),
                    running_var: encode(vec![bn.width()], &bn.running_var),
                    gamma: encode(vec![bn.width()], &bn.gamma),
                    beta: encode(vec![bn.width()], &bn.beta),
                    momentum: bn.momentum,
                }),
                activation: l.activation,
            }
        })
        .collect();
    let head = match &model.head {
        Head::Linear(d) => {
            let (weight, bias) = dense_docs(d);
            HeadDoc::Linear { weight, bias }
        }
        Head::Prototype(p) => HeadDoc::Prototype {
            prototypes: encode(vec![p.prototypes.rows(), p.prototypes.cols()], p.prototypes.as_slice()),
            tau: p.tau,
        },
    };
    let doc = ModelDoc {
        schema: MODEL_SCHEMA.to_string(),
        seed,
        input_width: model.input_width(),
        layers,
        power_scale: model.power_scale.map(|p| p.p),
        head,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("checkpoint serializes");
    s.push('\n');
    s
}

/// Parses a checkpoint, returning the model and its recorded seed.
pub fn read_checkpoint(text: &str) -> Result<(Model<f32>, Option<u64>)> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ModelDoc = serde_path_to_error::deserialize(de).map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))?;
    if doc.schema != MODEL_SCHEMA {
        return Err(Error::schema("schema", format!("expected {MODEL_SCHEMA}, found {}", doc.schema)));
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, l) in doc.layers.iter().enumerate() {
        let p = format!("layers[{i}]");
        let dense = Dense::new(decode_matrix(&l.weight, &format!("{p}.weight"))?, decode(&l.bias, &format!("{p}.bias"))?)?;
        let norm = match &l.norm {
            Some(n) => Some(BatchNorm {
                running_mean: decode(&n.running_mean, &format!("{p}.norm.running_mean"))?,
                running_var: decode(&n.running_var, &format!("{p}.norm.running_var"))?,
                gamma: decode(&n.gamma, &format!("{p}.norm.gamma"))?,
                beta: decode(&n.beta, &format!("{p}.norm.beta"))?,
                momentum: n.momentum,
            }),
            None => None,
        };
        if let Some(n) = &norm {
            if n.running_var.iter().any(|v| *v < 0.0) {
                return Err(Error::schema(format!("{p}.norm.running_var"), "negative variance"));
            }
        }
        layers.push(EncoderLayer {
            dense,
            norm,
            activation: l.activation,
        });
    }
    let head = match &doc.head {
        HeadDoc::Linear { weight, bias } => Head::Linear(Dense::new(decode_matrix(weight, "head.weight")?, decode(bias, "head.bias")?)?),
        HeadDoc::Prototype { prototypes, tau } => Head::Prototype(PrototypeHead {
            prototypes: decode_matrix(prototypes, "head.prototypes")?,
            tau: *tau,
        }),
    };
    let power_scale = doc.power_scale.map(PowerScale::new).transpose()?;
    Ok((Model::new(doc.input_width, layers, power_scale, head)?, doc.seed))
}

pub fn save_checkpoint(path: &Path, model: &Model<f32>, seed: Option<u64>) -> Result<()> {
    std::fs::write(path, write_checkpoint(model, seed))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model<f32>, Option<u64>)> {
    read_checkpoint(&std::fs::read_to_string(path)?)
}
