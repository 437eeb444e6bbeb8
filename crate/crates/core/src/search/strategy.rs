use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::collection::PipelineCollection;
use super::cv::{cv_folds, cv_objective_on, CvProtocol, Trial};
use super::space::{Point, SearchSpace};
use super::tpe::{tpe_suggest, TpeSettings};
use crate::bench::evaluate;
use crate::error::{Error, Result};
use crate::ops::AdaptTask;
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::rng::{derive, rng_from, stream};
use crate::tensor::Matrix;
use crate::Model;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    FromScratch,
    Transfer,
    Oracle,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FromScratch => "from-scratch",
            Strategy::Transfer => "transfer",
            Strategy::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOptions {
    pub budget: usize,
    pub seed: u64,
    pub tpe: TpeSettings,
    /// Evaluated first, in order, before any suggestion.
    pub warm_start: Vec<PipelineConfig>,
}

impl SearchOptions {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self {
            budget,
            seed,
            tpe: TpeSettings::default(),
            warm_start: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub strategy: Strategy,
    /// Index of the best trial in `history` (earliest on ties).
    pub best: usize,
    pub history: Vec<Trial>,
    pub warnings: Vec<String>,
}

impl SearchOutcome {
    fn new(strategy: Strategy, history: Vec<Trial>, warnings: Vec<String>) -> Result<Self> {
        let best = history
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, f64)>, (i, t)| match acc {
                Some((_, s)) if s >= t.score => acc,
                _ => Some((i, t.score)),
            })
            .map(|(i, _)| i)
            .ok_or_else(|| Error::Config("search evaluated no configuration".into()))?;
        Ok(Self {
            strategy,
            best,
            history,
            warnings,
        })
    }

    pub fn best_trial(&self) -> &Trial {
        &self.history[self.best]
    }

    /// Running maximum of trial scores.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |m, t| {
                *m = m.max(t.score);
                Some(*m)
            })
            .collect()
    }
}

/// Called after every finished trial with the best score so far.
pub type Progress<'a> = &'a mut dyn FnMut(&Trial, f64);

/// Generic TPE loop over an arbitrary trial objective. Start-up suggestions
/// do not depend on the history, so they are evaluated as one parallel batch.
pub fn run_search(
    space: &SearchSpace,
    options: &SearchOptions,
    objective: &(dyn Fn(&PipelineConfig) -> Trial + Sync),
    progress: Progress<'_>,
) -> Result<Vec<Trial>> {
    if options.budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    let suggest_seed = derive(options.seed, stream::SUGGEST);
    let mut history: Vec<Trial> = Vec::with_capacity(options.budget);
    let mut observed: Vec<(Point, f64)> = Vec::with_capacity(options.budget);
    let mut best = f64::NEG_INFINITY;
    let mut record = |mut trial: Trial, point: Point, history: &mut Vec<Trial>, observed: &mut Vec<(Point, f64)>| {
        trial.index = history.len();
        best = best.max(trial.score);
        progress(&trial, best);
        observed.push((point, trial.score));
        history.push(trial);
    };

    let startup = options.tpe.n_startup.max(options.warm_start.len()).min(options.budget);
    let mut batch: Vec<(PipelineConfig, Point)> = Vec::with_capacity(startup);
    for t in 0..startup {
        if let Some(cfg) = options.warm_start.get(t) {
            batch.push((cfg.clone(), space.from_config(cfg)?));
        } else {
            let point = space.sample(&mut rng_from(derive(suggest_seed, t as u64)));
            batch.push((space.to_config(&point)?, point));
        }
    }
    let trials: Vec<Trial> = batch.par_iter().map(|(cfg, _)| objective(cfg)).collect();
    for (trial, (_, point)) in trials.into_iter().zip(batch) {
        record(trial, point, &mut history, &mut observed);
    }
    for t in startup..options.budget {
        let point = tpe_suggest(&observed, space, &options.tpe, &mut rng_from(derive(suggest_seed, t as u64)))?;
        let trial = match space.to_config(&point) {
            Ok(cfg) => objective(&cfg),
            Err(e) => Trial::from_scores(PipelineConfig::all_off(), Err(e), options.seed, Instant::now()),
        };
        record(trial, point, &mut history, &mut observed);
    }
    Ok(history)
}

/// TPE over the full pipeline space, scored by cross-validation on the
/// support set.
pub fn search_from_scratch(
    base: &Model<f32>,
    task: &AdaptTask<f32>,
    space: &SearchSpace,
    protocol: &CvProtocol,
    options: &SearchOptions,
    progress: Progress<'_>,
) -> Result<SearchOutcome> {
    let folds = cv_folds(&task.labels, task.n_way, protocol)?;
    let objective = |cfg: &PipelineConfig| cv_objective_on(base, task, cfg, protocol, &folds);
    let history = run_search(space, options, &objective, progress)?;
    SearchOutcome::new(Strategy::FromScratch, history, Vec::new())
}

/// Cross-validates every decodable collection entry and keeps the best.
pub fn search_transfer(
    base: &Model<f32>,
    task: &AdaptTask<f32>,
    collection: &PipelineCollection,
    protocol: &CvProtocol,
    progress: Progress<'_>,
) -> Result<SearchOutcome> {
    if collection.entries.is_empty() {
        return Err(Error::Config("transfer needs a non-empty collection".into()));
    }
    let folds = cv_folds(&task.labels, task.n_way, protocol)?;
    let mut warnings = Vec::new();
    let mut configs = Vec::new();
    for (i, entry) in collection.entries.iter().enumerate() {
        match entry.config() {
            Ok(cfg) => configs.push(cfg),
            Err(e) => warnings.push(format!("collection entry {i} ({}) skipped: {e}", entry.provenance)),
        }
    }
    let trials: Vec<Trial> = configs.par_iter().map(|cfg| cv_objective_on(base, task, cfg, protocol, &folds)).collect();
    let mut best = f64::NEG_INFINITY;
    let history: Vec<Trial> = trials
        .into_iter()
        .enumerate()
        .map(|(i, mut t)| {
            t.index = i;
            best = best.max(t.score);
            progress(&t, best);
            t
        })
        .collect();
    SearchOutcome::new(Strategy::Transfer, history, warnings)
}

/// Test accuracy of adapting on the full support set, with seed
/// `derive(seed, PIPELINE)`.
pub fn test_objective(base: &Model<f32>, task: &AdaptTask<f32>, test_x: &Matrix<f32>, test_y: &[usize], cfg: &PipelineConfig, seed: u64) -> Trial {
    let started = Instant::now();
    let score = run_pipeline(base, task, cfg, derive(seed, stream::PIPELINE)).and_then(|m| evaluate(&m, test_x, test_y));
    Trial::from_scores(cfg.clone(), score.map(|s| vec![s]), seed, started)
}

/// Same loop as [`search_from_scratch`] but scored on held-out test labels.
/// Leaks test information by construction.
pub fn search_oracle(
    base: &Model<f32>,
    task: &AdaptTask<f32>,
    test_x: &Matrix<f32>,
    test_y: &[usize],
    space: &SearchSpace,
    options: &SearchOptions,
    progress: Progress<'_>,
) -> Result<SearchOutcome> {
    let objective = |cfg: &PipelineConfig| test_objective(base, task, test_x, test_y, cfg, options.seed);
    let history = run_search(space, options, &objective, progress)?;
    SearchOutcome::new(Strategy::Oracle, history, Vec::new())
}
