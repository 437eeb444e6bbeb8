use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cv::CvProtocol;
use super::space::SearchSpace;
use super::strategy::{search_from_scratch, SearchOptions};
use crate::error::{Error, Result};
use crate::ops::AdaptTask;
use crate::pipeline::{config_from_value, config_value, PipelineConfig};
use crate::rng::derive;
use crate::Model;

pub const COLLECTION_SCHEMA: &str = "map-collection/1";

/// Where a collection entry was found.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub domain: String,
    pub shot: usize,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}-shot", self.domain, self.shot)
    }
}

/// A stored pipeline document; decoded lazily so that one bad entry does not
/// invalidate the file.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectionEntry {
    pub provenance: Provenance,
    pub document: Value,
}

impl CollectionEntry {
    pub fn new(provenance: Provenance, cfg: &PipelineConfig) -> Self {
        Self {
            provenance,
            document: config_value(cfg, None),
        }
    }

    pub fn config(&self) -> Result<PipelineConfig> {
        config_from_value(&self.document)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct PipelineCollection {
    pub seed: Option<u64>,
    pub entries: Vec<CollectionEntry>,
}

/// A labeled task to build a collection from.
#[derive(Clone, Debug)]
pub struct SourceTask {
    pub provenance: Provenance,
    pub task: AdaptTask<f32>,
}

impl PipelineCollection {
    /// JSON Lines: a header line, then one `{provenance, pipeline}` per entry.
    pub fn to_jsonl(&self) -> String {
        let mut header = serde_json::Map::new();
        header.insert("schema".into(), COLLECTION_SCHEMA.into());
        if let Some(seed) = self.seed {
            header.insert("seed".into(), seed.into());
        }
        header.insert("entries".into(), self.entries.len().into());
        let mut out = Value::Object(header).to_string();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&json!({"provenance": e.provenance, "pipeline": e.document}).to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines.next().ok_or_else(|| Error::schema("line 1", "empty collection file"))?;
        let head: Value = serde_json::from_str(head).map_err(|e| Error::schema("line 1", e.to_string()))?;
        if head.get("schema").and_then(Value::as_str) != Some(COLLECTION_SCHEMA) {
            return Err(Error::schema("line 1.schema", format!("expected \"{COLLECTION_SCHEMA}\"")));
        }
        let seed = head.get("seed").and_then(Value::as_u64);
        let mut entries = Vec::new();
        for (n, line) in lines {
            let at = format!("line {}", n + 1);
            let v: Value = serde_json::from_str(line).map_err(|e| Error::schema(&at, e.to_string()))?;
            let obj = v.as_object().ok_or_else(|| Error::schema(&at, "expected an object"))?;
            if let Some(k) = obj.keys().find(|k| *k != "provenance" && *k != "pipeline") {
                return Err(Error::schema(format!("{at}.{k}"), "unknown field"));
            }
            let provenance: Provenance = serde_json::from_value(obj.get("provenance").cloned().unwrap_or(Value::Null))
                .map_err(|e| Error::schema(format!("{at}.provenance"), e.to_string()))?;
            if provenance.domain.is_empty() {
                return Err(Error::schema(format!("{at}.provenance.domain"), "must be non-empty"));
            }
            let document = obj.get("pipeline").cloned().ok_or_else(|| Error::schema(format!("{at}.pipeline"), "missing"))?;
            entries.push(CollectionEntry { provenance, document });
        }
        if let Some(n) = head.get("entries").and_then(Value::as_u64) {
            if n as usize != entries.len() {
                return Err(Error::schema("line 1.entries", format!("header announces {n} entries, found {}", entries.len())));
            }
        }
        Ok(Self { seed, entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

/// From-scratch search on every task; each winner becomes one entry. Task `i`
/// searches with seed `derive(seed, i)` and folds from `derive(protocol.seed, i)`.
pub fn collection_build(
    base: &Model<f32>,
    tasks: &[SourceTask],
    space: &SearchSpace,
    protocol: &CvProtocol,
    budget: usize,
    seed: u64,
) -> Result<PipelineCollection> {
    if tasks.is_empty() {
        return Err(Error::Config("collection_build needs at least one task".into()));
    }
    let winners: Result<Vec<CollectionEntry>> = tasks
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let proto = CvProtocol {
                seed: derive(protocol.seed, i as u64),
                ..*protocol
            };
            let options = SearchOptions::new(budget, derive(seed, i as u64));
            let outcome = search_from_scratch(base, &t.task, space, &proto, &options, &mut |_, _| {})?;
            Ok(CollectionEntry::new(t.provenance.clone(), &outcome.best_trial().config))
        })
        .collect();
    Ok(PipelineCollection {
        seed: Some(seed),
        entries: winners?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Preset;

    fn sample() -> PipelineCollection {
        PipelineCollection {
            seed: Some(4),
            entries: vec![
                CollectionEntry::new(
                    Provenance {
                        domain: "a".into(),
                        shot: 2,
                    },
                    &PipelineConfig::preset(Preset::Pn),
                ),
                CollectionEntry::new(
                    Provenance {
                        domain: "b".into(),
                        shot: 5,
                    },
                    &PipelineConfig::preset(Preset::Ft),
                ),
            ],
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let c = sample();
        let text = c.to_jsonl();
        assert_eq!(text.lines().count(), 3);
        let back = PipelineCollection::from_jsonl(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_jsonl(), text);
        assert_eq!(back.entries[1].config().unwrap(), PipelineConfig::preset(Preset::Ft));
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(PipelineCollection::from_jsonl("").is_err());
        assert!(PipelineCollection::from_jsonl("{\"schema\":\"other\"}\n").is_err());
        let text = sample().to_jsonl().replace("\"entries\":2", "\"entries\":3");
        assert!(PipelineCollection::from_jsonl(&text).is_err());
        let text = sample().to_jsonl().replace("\"domain\":\"a\"", "\"domain\":\"\"");
        assert!(PipelineCollection::from_jsonl(&text).is_err());
    }

    #[test]
    fn undecodable_pipeline_is_kept_raw() {
        let text = sample().to_jsonl().replacen("\"switch\":\"on\"", "\"switch\":\"sideways\"", 1);
        let c = PipelineCollection::from_jsonl(&text).unwrap();
        assert!(c.entries[0].config().is_err());
        assert!(c.entries[1].config().is_ok());
    }
}
