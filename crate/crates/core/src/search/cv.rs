use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::bench::evaluate;
use crate::error::{Error, Result};
use crate::ops::AdaptTask;
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::rng::{derive, rng_from, stream};
use crate::Model;

/// Monte Carlo cross-validation: `folds` independent class-stratified splits,
/// each keeping `round(k · train_fraction)` (clamped to `[1, k−1]`) examples
/// per class for adaptation and the rest for validation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvProtocol {
    pub folds: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl CvProtocol {
    pub fn new(seed: u64) -> Self {
        Self {
            folds: 5,
            train_fraction: 0.5,
            seed,
        }
    }

    /// Seed handed to `run_pipeline` on fold `f`. Independent of the
    /// configuration and of the trial index.
    pub fn pipeline_seed(&self, fold: usize) -> u64 {
        derive(derive(self.seed, stream::PIPELINE), fold as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Per-class seeded shuffle; the first share of each class trains.
pub fn cv_folds(labels: &[usize], n_way: usize, protocol: &CvProtocol) -> Result<Vec<Fold>> {
    if protocol.folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    if !(protocol.train_fraction > 0.0 && protocol.train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
    }
    let mut by_class = vec![Vec::new(); n_way];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if let Some((class, rows)) = by_class.iter().enumerate().find(|(_, r)| r.len() < 2) {
        return Err(Error::Stratification { class, count: rows.len() });
    }
    Ok((0..protocol.folds)
        .map(|f| {
            let mut rng = rng_from(derive(derive(protocol.seed, stream::FOLDS), f as u64));
            let mut train = Vec::new();
            let mut val = Vec::new();
            for rows in &by_class {
                let mut rows = rows.clone();
                rows.shuffle(&mut rng);
                let k = rows.len();
                let n_train = ((k as f64 * protocol.train_fraction).round() as usize).clamp(1, k - 1);
                train.extend_from_slice(&rows[..n_train]);
                val.extend_from_slice(&rows[n_train..]);
            }
            train.sort_unstable();
            val.sort_unstable();
            Fold { train, val }
        })
        .collect())
}

/// The adaptation task of one fold: its training rows and the full unlabeled pool.
pub fn fold_task(task: &AdaptTask<f32>, fold: &Fold) -> Result<AdaptTask<f32>> {
    let k = fold.train.len() / task.n_way.max(1);
    AdaptTask::new(
        task.labeled.select_rows(&fold.train),
        fold.train.iter().map(|&i| task.labels[i]).collect(),
        task.unlabeled.clone(),
        task.n_way,
        k,
    )
}

/// One evaluated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub config: PipelineConfig,
    pub fold_scores: Vec<f64>,
    /// Mean of `fold_scores`; 0 when the trial failed.
    pub score: f64,
    pub seed: u64,
    pub error: Option<String>,
    pub wall_time: f64,
}

impl Trial {
    pub(crate) fn from_scores(config: PipelineConfig, scores: Result<Vec<f64>>, seed: u64, started: Instant) -> Self {
        let (fold_scores, score, error) = match scores {
            Ok(s) => {
                let mean = s.iter().sum::<f64>() / s.len().max(1) as f64;
                (s, mean, None)
            }
            Err(e) => (Vec::new(), 0.0, Some(e.to_string())),
        };
        Trial {
            index: 0,
            config,
            fold_scores,
            score,
            seed,
            error,
            wall_time: started.elapsed().as_secs_f64(),
        }
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Mean validation accuracy of `cfg` over the protocol's folds. Adaptation
/// failures yield a failed trial (score 0); an unsplittable task is an error.
pub fn cv_objective(base: &Model<f32>, task: &AdaptTask<f32>, cfg: &PipelineConfig, protocol: &CvProtocol) -> Result<Trial> {
    let folds = cv_folds(&task.labels, task.n_way, protocol)?;
    Ok(cv_objective_on(base, task, cfg, protocol, &folds))
}

pub(crate) fn cv_objective_on(base: &Model<f32>, task: &AdaptTask<f32>, cfg: &PipelineConfig, protocol: &CvProtocol, folds: &[Fold]) -> Trial {
    let started = Instant::now();
    let scores: Result<Vec<f64>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, fold)| {
            let sub = fold_task(task, fold)?;
            let adapted = run_pipeline(base, &sub, cfg, protocol.pipeline_seed(f))?;
            let val_y: Vec<usize> = fold.val.iter().map(|&i| task.labels[i]).collect();
            evaluate(&adapted, &task.labeled.select_rows(&fold.val), &val_y)
        })
        .collect();
    Trial::from_scores(cfg.clone(), scores, protocol.seed, started)
}
