//! The `adapipe` command line: pretraining, adaptation, search, benchmark,
//! collection building and similarity analysis, each driven by one JSON
//! configuration document.

mod config;

use std::fmt;
use std::path::{Path, PathBuf};

use adapipe::analysis::{evaluate_grid, similarity_report, GridTask};
use adapipe::bench::{evaluate, pretrain_source, run_benchmark, sample_episode};
use adapipe::model::write_checkpoint;
use adapipe::pipeline::{config_value, encode_config_with_seed, run_pipeline, PipelineConfig};
use adapipe::rng::{derive, derive_path, stream};
use adapipe::search::{
    collection_build, search_from_scratch, search_oracle, search_report, search_transfer, CvProtocol, SearchOptions, SearchSpace, SourceTask,
    Strategy, Trial,
};
use adapipe::ModelTemplate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use config::*;

#[derive(Debug, Parser)]
#[command(name = "adapipe", version, about = "Modular adaptation pipelines for few-shot classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Root seed; overrides the one in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PresetArg {
    Pn,
    Ft,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the source model and write `model.json`.
    Pretrain(ConfigArg),
    /// Adapt on seeded episodes and write `adapt.json`.
    Adapt {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Use a baseline preset instead of the configured pipeline.
        #[arg(long)]
        preset: Option<PresetArg>,
    },
    /// Search a pipeline; writes `report.json` and `pipeline.json`.
    Search(ConfigArg),
    /// Run a benchmark suite; writes `summary.csv`, `detail.csv` and `bench.json`.
    Bench(ConfigArg),
    /// Build a pipeline collection; writes `collection.jsonl`.
    Collect(ConfigArg),
    /// Cross-task similarity of a collection; writes `analysis.json` and `table.csv`.
    Similarity(ConfigArg),
}

/// A failure with its exit status: 2 for configuration, 3 for runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn to_json(&self) -> Value {
        let (kind, message) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        json!({"event": "error", "kind": kind, "message": message})
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn event(v: Value) {
    eprintln!("{v}");
}

pub fn run(cli: Cli) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build().map_err(runtime)?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let written = match &cli.command {
        Command::Pretrain(a) => cmd_pretrain(&a.config, cli)?,
        Command::Adapt { cfg, preset } => cmd_adapt(&cfg.config, *preset, cli)?,
        Command::Search(a) => cmd_search(&a.config, cli)?,
        Command::Bench(a) => cmd_bench(&a.config, cli)?,
        Command::Collect(a) => cmd_collect(&a.config, cli)?,
        Command::Similarity(a) => cmd_similarity(&a.config, cli)?,
    };
    event(json!({"event": "done", "files": written}));
    Ok(())
}

fn write_outputs(out: &Path, files: &[(&str, String)]) -> CliResult<Vec<String>> {
    std::fs::create_dir_all(out).map_err(|e| runtime(format!("cannot create {}: {e}", out.display())))?;
    files
        .iter()
        .map(|(name, body)| {
            let path = out.join(name);
            std::fs::write(&path, body).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
            Ok(path.display().to_string())
        })
        .collect()
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn cmd_pretrain(path: &Path, cli: &Cli) -> CliResult<Vec<String>> {
    let (cfg, base): (PretrainConfig, _) = load_config(path)?;
    let seed = resolve_seed(cli.seed, cfg.seed)?;
    let ds = cfg.dataset.load(&base, "dataset")?;
    let template = ModelTemplate {
        input_width: ds.features.cols(),
        hidden: cfg.pretrain.hidden.clone(),
        batch_norm: cfg.pretrain.batch_norm,
        classes: ds.num_classes(),
    };
    template.build::<f32>(seed).map_err(|e| CliError::Config(format!("pretrain: {e}")))?;
    let model = pretrain_source(&ds, &template, &cfg.pretrain, seed).map_err(runtime)?;
    write_outputs(&cli.out, &[("model.json", write_checkpoint(&model, Some(seed)))])
}

fn cmd_adapt(path: &Path, preset: Option<PresetArg>, cli: &Cli) -> CliResult<Vec<String>> {
    let (cfg, base): (AdaptConfig, _) = load_config(path)?;
    let seed = resolve_seed(cli.seed, cfg.seed)?;
    let model = load_model(&base, &cfg.checkpoint)?;
    let ds = cfg.dataset.load(&base, "dataset")?;
    check_width(&model, &ds)?;
    let pipeline = match preset {
        Some(p) => preset_config(p),
        None => cfg.pipeline.as_ref().ok_or_else(|| CliError::Config("pipeline: missing (or pass --preset)".into()))?.load(&base)?,
    };
    if cfg.seeds == 0 {
        return Err(CliError::Config("seeds: must be at least 1".into()));
    }
    let accuracies: Vec<f64> = (0..cfg.seeds)
        .into_par_iter()
        .map(|s| {
            let ep = sample_episode(&ds, &cfg.episode, derive_path(seed, &[stream::EPISODE, s as u64]))?;
            let adapted = run_pipeline(&model, &ep.task, &pipeline, derive_path(seed, &[stream::PIPELINE, s as u64]))?;
            evaluate(&adapted, &ep.test_x, &ep.test_y)
        })
        .collect::<adapipe::Result<_>>()
        .map_err(runtime)?;
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    let report = json!({
        "schema": ADAPT_SCHEMA,
        "seed": seed,
        "episode": cfg.episode,
        "pipeline": config_value(&pipeline, None),
        "accuracies": accuracies,
        "mean": mean,
    });
    write_outputs(&cli.out, &[("adapt.json", pretty(&report))])
}

fn trial_event(t: &Trial, best: f64) {
    event(json!({"event": "trial", "index": t.index, "score": t.score, "best": best}));
}

fn cmd_search(path: &Path, cli: &Cli) -> CliResult<Vec<String>> {
    let (cfg, base): (SearchConfig, _) = load_config(path)?;
    let seed = resolve_seed(cli.seed, cfg.seed)?;
    let collection = match (cfg.strategy, &cfg.collection) {
        (Strategy::Transfer, None) => return Err(CliError::Config("collection: required by the transfer strategy".into())),
        (Strategy::Transfer, Some(p)) => Some(load_collection(&base, p)?),
        _ => None,
    };
    if cfg.budget == 0 {
        return Err(CliError::Config("budget: must be at least 1".into()));
    }
    let model = load_model(&base, &cfg.checkpoint)?;
    let ds = cfg.dataset.load(&base, "dataset")?;
    check_width(&model, &ds)?;
    let ep = sample_episode(&ds, &cfg.episode, derive(seed, stream::EPISODE)).map_err(|e| CliError::Config(format!("episode: {e}")))?;
    let protocol = CvProtocol {
        folds: cfg.folds,
        train_fraction: 0.5,
        seed: derive(seed, stream::FOLDS),
    };
    let space = SearchSpace::pipeline();
    let options = SearchOptions::new(cfg.budget, seed);
    let mut progress = trial_event;
    let outcome = match cfg.strategy {
        Strategy::FromScratch => search_from_scratch(&model, &ep.task, &space, &protocol, &options, &mut progress),
        Strategy::Transfer => search_transfer(&model, &ep.task, collection.as_ref().expect("loaded above"), &protocol, &mut progress),
        Strategy::Oracle => search_oracle(&model, &ep.task, &ep.test_x, &ep.test_y, &space, &options, &mut progress),
    }
    .map_err(runtime)?;
    let report = search_report(&outcome, seed, cfg.timing);
    write_outputs(
        &cli.out,
        &[
            ("report.json", pretty(&report)),
            ("pipeline.json", encode_config_with_seed(&outcome.best_trial().config, seed) + "\n"),
        ],
    )
}

fn cmd_bench(path: &Path, cli: &Cli) -> CliResult<Vec<String>> {
    let (cfg, base): (BenchConfig, _) = load_config(path)?;
    let mut suite = load_suite(&base, &cfg.suite, "suite")?;
    if let Some(s) = cli.seed {
        suite.seed = s;
    }
    let collection = cfg.collection.as_ref().map(|p| load_collection(&base, p)).transpose()?;
    if suite.approaches.contains(&adapipe::bench::Approach::MapTransfer) && collection.is_none() {
        return Err(CliError::Config("collection: required by the map-transfer approach".into()));
    }
    let model = match &cfg.checkpoint {
        Some(p) => load_model(&base, p)?,
        None => suite.pretrain_model().map_err(runtime)?,
    };
    if model.input_width() != suite.layout.dim {
        return Err(CliError::Config(format!("checkpoint: input width {} does not match suite dim {}", model.input_width(), suite.layout.dim)));
    }
    let result = run_benchmark(&suite, &model, collection.as_ref(), &|d, k| event(json!({"event": "cell", "domain": d, "shot": k})))
        .map_err(runtime)?;
    let summary = result.summary_csv();
    let detail = result.detail_csv();
    let doc = json!({
        "schema": BENCH_RESULT_SCHEMA,
        "seed": suite.seed,
        "suite": suite,
        "winners": result.winners.iter().map(|w| json!({
            "domain": w.domain,
            "shot": w.shot,
            "cv_score": w.cv_score,
            "pipeline": config_value(&w.config, None),
        })).collect::<Vec<_>>(),
        "summary_csv": summary,
        "detail_csv": detail,
    });
    write_outputs(&cli.out, &[("summary.csv", summary.clone()), ("detail.csv", detail.clone()), ("bench.json", pretty(&doc))])
}

fn cmd_collect(path: &Path, cli: &Cli) -> CliResult<Vec<String>> {
    let (cfg, base): (CollectConfig, _) = load_config(path)?;
    let seed = resolve_seed(cli.seed, cfg.seed)?;
    if cfg.tasks.is_empty() || cfg.budget == 0 {
        return Err(CliError::Config("tasks and budget must be non-empty".into()));
    }
    let model = load_model(&base, &cfg.checkpoint)?;
    let mut sources = Vec::new();
    for (i, t) in cfg.tasks.iter().enumerate() {
        let field = format!("tasks[{i}]");
        let ds = t.dataset.load(&base, &format!("{field}.dataset"))?;
        check_width(&model, &ds)?;
        for &shot in &t.shots {
            let spec = adapipe::bench::EpisodeSpec {
                n_way: t.n_way,
                k_shot: shot,
                test_per_class: t.test_per_class,
            };
            let ep = sample_episode(&ds, &spec, derive_path(seed, &[stream::EPISODE, i as u64, shot as u64]))
                .map_err(|e| CliError::Config(format!("{field}: {e}")))?;
            sources.push(SourceTask {
                provenance: adapipe::search::Provenance {
                    domain: t.domain.clone(),
                    shot,
                },
                task: ep.task,
            });
        }
    }
    let protocol = CvProtocol {
        folds: cfg.folds,
        train_fraction: 0.5,
        seed: derive(seed, stream::FOLDS),
    };
    let collection = collection_build(&model, &sources, &SearchSpace::pipeline(), &protocol, cfg.budget, seed).map_err(runtime)?;
    write_outputs(&cli.out, &[("collection.jsonl", collection.to_jsonl())])
}

fn cmd_similarity(path: &Path, cli: &Cli) -> CliResult<Vec<String>> {
    let (cfg, base): (SimilarityConfig, _) = load_config(path)?;
    let seed = resolve_seed(cli.seed, cfg.seed)?;
    let model = load_model(&base, &cfg.checkpoint)?;
    let collection = load_collection(&base, &cfg.collection)?;
    let mut pipelines: Vec<(String, PipelineConfig)> = Vec::new();
    for (i, e) in collection.entries.iter().enumerate() {
        let pc = e.config().map_err(|err| CliError::Config(format!("collection entry {i}: {err}")))?;
        let mut name = e.provenance.to_string();
        if pipelines.iter().any(|(n, _)| *n == name) {
            name = format!("{name}#{i}");
        }
        pipelines.push((name, pc));
    }
    if pipelines.len() < 2 || cfg.tasks.is_empty() {
        return Err(CliError::Config("similarity needs at least 2 pipelines and 1 task".into()));
    }
    let mut tasks = Vec::new();
    for (i, t) in cfg.tasks.iter().enumerate() {
        let field = format!("tasks[{i}]");
        let ds = t.dataset.load(&base, &format!("{field}.dataset"))?;
        check_width(&model, &ds)?;
        let episode = sample_episode(&ds, &t.episode, derive_path(seed, &[stream::EPISODE, i as u64])).map_err(|e| CliError::Config(format!("{field}: {e}")))?;
        tasks.push(GridTask { id: t.id.clone(), episode });
    }
    let grid = evaluate_grid(&model, &pipelines, &tasks, seed);
    let report = similarity_report(grid).map_err(runtime)?;
    write_outputs(&cli.out, &[("analysis.json", pretty(&report.to_json(seed))), ("table.csv", report.table_csv())])
}
