use std::path::{Path, PathBuf};

use adapipe::bench::{ingest_csv, BenchSuite, EmbeddingDataset, EpisodeSpec, PretrainSpec};
use adapipe::model::load_checkpoint;
use adapipe::pipeline::{decode_config, PipelineConfig, Preset};
use adapipe::search::{PipelineCollection, Strategy};
use adapipe::Model;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::{CliError, CliResult, PresetArg};

pub const ADAPT_SCHEMA: &str = "map-adapt/1";
pub const BENCH_RESULT_SCHEMA: &str = "map-bench-result/1";

/// Parses a configuration file. Relative paths inside it resolve against the
/// returned directory.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<(T, PathBuf)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let cfg = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config(format!("{}: at {}: {}", path.display(), e.path(), e.inner())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

pub fn resolve_seed(cli: Option<u64>, cfg: Option<u64>) -> CliResult<u64> {
    cli.or(cfg).ok_or_else(|| CliError::Config("seed: not given in the configuration or with --seed".into()))
}

/// `base/path`, which must exist.
pub fn input_path(base: &Path, field: &str, path: &Path) -> CliResult<PathBuf> {
    let p = base.join(path);
    if !p.exists() {
        return Err(CliError::Config(format!("{field}: file not found: {}", p.display())));
    }
    Ok(p)
}

pub fn load_model(base: &Path, path: &Path) -> CliResult<Model<f32>> {
    let p = input_path(base, "checkpoint", path)?;
    load_checkpoint(&p).map(|(m, _)| m).map_err(|e| CliError::Config(format!("checkpoint: {e}")))
}

pub fn load_collection(base: &Path, path: &Path) -> CliResult<PipelineCollection> {
    let p = input_path(base, "collection", path)?;
    PipelineCollection::load(&p).map_err(|e| CliError::Config(format!("collection: {e}")))
}

pub fn load_suite(base: &Path, path: &Path, field: &str) -> CliResult<BenchSuite> {
    let p = input_path(base, field, path)?;
    let (suite, _): (BenchSuite, _) = load_config(&p)?;
    suite.validate().map_err(|e| CliError::Config(format!("{field}: {e}")))?;
    Ok(suite)
}

pub fn check_width(model: &Model<f32>, ds: &EmbeddingDataset) -> CliResult<()> {
    if model.input_width() != ds.features.cols() {
        return Err(CliError::Config(format!(
            "checkpoint input width {} does not match {} features in dataset {}",
            model.input_width(),
            ds.features.cols(),
            ds.domain_tag
        )));
    }
    Ok(())
}

pub fn preset_config(p: PresetArg) -> PipelineConfig {
    PipelineConfig::preset(match p {
        PresetArg::Pn => Preset::Pn,
        PresetArg::Ft => Preset::Ft,
    })
}

/// Either a CSV file or a domain generated from a benchmark suite.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub csv: Option<PathBuf>,
    pub suite: Option<PathBuf>,
    pub domain: Option<String>,
}

impl DatasetRef {
    pub fn load(&self, base: &Path, field: &str) -> CliResult<EmbeddingDataset> {
        match (&self.csv, &self.suite, &self.domain) {
            (Some(csv), None, None) => {
                let p = input_path(base, &format!("{field}.csv"), csv)?;
                ingest_csv(&p).map_err(|e| CliError::Config(format!("{field}.csv: {e}")))
            }
            (None, Some(suite), Some(domain)) => {
                let suite = load_suite(base, suite, &format!("{field}.suite"))?;
                suite
                    .dataset_named(domain)
                    .ok_or_else(|| CliError::Config(format!("{field}.domain: no domain named {domain:?}")))?
                    .map_err(|e| CliError::Config(format!("{field}: {e}")))
            }
            _ => Err(CliError::Config(format!("{field}: give either \"csv\" or both \"suite\" and \"domain\""))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineRef {
    pub preset: Option<PresetName>,
    pub file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Pn,
    Ft,
}

impl PipelineRef {
    pub fn load(&self, base: &Path) -> CliResult<PipelineConfig> {
        match (self.preset, &self.file) {
            (Some(PresetName::Pn), None) => Ok(preset_config(PresetArg::Pn)),
            (Some(PresetName::Ft), None) => Ok(preset_config(PresetArg::Ft)),
            (None, Some(f)) => {
                let p = input_path(base, "pipeline.file", f)?;
                let text = std::fs::read_to_string(&p).map_err(|e| CliError::Config(format!("pipeline.file: {e}")))?;
                decode_config(&text).map_err(|e| CliError::Config(format!("pipeline.file: {e}")))
            }
            _ => Err(CliError::Config("pipeline: give exactly one of \"preset\" or \"file\"".into())),
        }
    }
}

fn default_seeds() -> usize {
    5
}

fn default_folds() -> usize {
    5
}

fn default_budget() -> usize {
    400
}

fn default_test_per_class() -> usize {
    20
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub dataset: DatasetRef,
    #[serde(default)]
    pub pretrain: PretrainSpec,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptConfig {
    pub checkpoint: PathBuf,
    pub dataset: DatasetRef,
    pub episode: EpisodeSpec,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    pub pipeline: Option<PipelineRef>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub checkpoint: PathBuf,
    pub dataset: DatasetRef,
    pub episode: EpisodeSpec,
    pub strategy: Strategy,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub collection: Option<PathBuf>,
    /// Include per-trial wall times in the report (breaks byte-identical reruns).
    #[serde(default)]
    pub timing: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub suite: PathBuf,
    /// Base model; pretrained from the suite's source domain when absent.
    pub checkpoint: Option<PathBuf>,
    pub collection: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectTask {
    pub domain: String,
    pub dataset: DatasetRef,
    pub n_way: usize,
    pub shots: Vec<usize>,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectConfig {
    pub checkpoint: PathBuf,
    pub tasks: Vec<CollectTask>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskRef {
    pub id: String,
    pub dataset: DatasetRef,
    pub episode: EpisodeSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityConfig {
    pub checkpoint: PathBuf,
    pub collection: PathBuf,
    pub tasks: Vec<TaskRef>,
    pub seed: Option<u64>,
}
