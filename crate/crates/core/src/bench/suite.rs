use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, gen_domain, sample_episode, ClassLayout, DomainShiftSpec, EmbeddingDataset, Episode, EpisodeSpec};
use crate::error::{Error, Result};
use crate::loss::mean_cross_entropy;
use crate::model::{Mode, OptimizerKind, OptimizerSpec, OptimizerState};
use crate::ops::train::{ensure_finite, epoch_batches};
use crate::pipeline::{run_pipeline, PipelineConfig, Preset};
use crate::rng::{derive, derive_path, rng_from, stream};
use crate::search::{search_from_scratch, search_transfer, CvProtocol, PipelineCollection, SearchOptions, SearchSpace};
use crate::{Model, ModelTemplate};

pub const BENCH_SCHEMA: &str = "map-bench/1";

/// Source-domain pretraining recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSpec {
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for PretrainSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            batch_norm: true,
            epochs: 30,
            lr: 1e-3,
            batch_size: 64,
        }
    }
}

/// Supervised Adam training of `template` on the whole source domain, with
/// batch-norm layers in training mode. Zero epochs returns the seeded
/// initialization.
pub fn pretrain_source(ds: &EmbeddingDataset, template: &ModelTemplate, spec: &PretrainSpec, seed: u64) -> Result<Model<f32>> {
    if ds.num_classes() < 2 {
        return Err(Error::InvalidTask("source domain needs at least 2 classes".into()));
    }
    let mut model: Model<f32> = template.build(derive(seed, stream::INIT))?;
    let opt = OptimizerSpec {
        kind: OptimizerKind::Adam,
        lr_classifier: spec.lr,
        lr_embed: spec.lr,
        momentum: 0.9,
        decay: 0.0,
    };
    let mut state = OptimizerState::for_model(&model);
    let mut rng = rng_from(derive(seed, stream::LABELED));
    let n = ds.features.rows();
    for epoch in 0..spec.epochs {
        for idx in epoch_batches(n, spec.batch_size, &mut rng) {
            if idx.len() < 2 && model.has_batch_norm() {
                continue;
            }
            let x = ds.features.select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| ds.labels[i]).collect();
            let (scores, cache) = model.forward_cached(&x, Mode::Train)?;
            let (loss, grad) = mean_cross_entropy(&scores, &y);
            ensure_finite(loss, epoch)?;
            let grads = model.backward(&cache, &grad)?;
            state.step(&mut model, &grads, &opt, 1.0)?;
        }
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainEntry {
    pub name: String,
    pub instance_seed: u64,
    pub shift: DomainShiftSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    Pn,
    Ft,
    /// From-scratch search on a dedicated search episode per (domain, shot).
    Map,
    /// Selection from a pipeline collection on every evaluation episode.
    MapTransfer,
}

impl Approach {
    pub fn label(self) -> &'static str {
        match self {
            Approach::Pn => "PN",
            Approach::Ft => "FT",
            Approach::Map => "MAP",
            Approach::MapTransfer => "MAP-transfer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    pub schema: String,
    pub seed: u64,
    pub layout: ClassLayout,
    pub source: DomainEntry,
    pub domains: Vec<DomainEntry>,
    pub pretrain: PretrainSpec,
    pub n_way: usize,
    pub test_per_class: usize,
    pub seeds: usize,
    pub shots: Vec<usize>,
    pub approaches: Vec<Approach>,
    pub search_budget: usize,
    pub folds: usize,
}

impl BenchSuite {
    pub fn validate(&self) -> Result<()> {
        if self.schema != BENCH_SCHEMA {
            return Err(Error::schema("schema", format!("expected \"{BENCH_SCHEMA}\"")));
        }
        self.layout.validate()?;
        self.source.shift.validate(&self.layout)?;
        for d in &self.domains {
            d.shift.validate(&self.layout)?;
        }
        if self.domains.is_empty() || self.shots.is_empty() || self.approaches.is_empty() {
            return Err(Error::Config("suite needs domains, shots and approaches".into()));
        }
        if self.seeds == 0 || self.test_per_class == 0 || self.n_way < 2 || self.n_way > self.layout.n_classes {
            return Err(Error::Config("seeds and test_per_class must be ≥ 1, n_way in [2, classes]".into()));
        }
        if self.approaches.contains(&Approach::Map) && (self.search_budget == 0 || self.shots.iter().any(|&k| k < 2)) {
            return Err(Error::Config("MAP needs search_budget ≥ 1 and shots ≥ 2".into()));
        }
        Ok(())
    }

    pub fn template(&self) -> ModelTemplate {
        ModelTemplate {
            input_width: self.layout.dim,
            hidden: self.pretrain.hidden.clone(),
            batch_norm: self.pretrain.batch_norm,
            classes: self.layout.n_classes,
        }
    }

    pub fn source_dataset(&self) -> Result<EmbeddingDataset> {
        gen_domain(&self.layout, self.source.instance_seed, &self.source.shift, &self.source.name)
    }

    pub fn domain_dataset(&self, i: usize) -> Result<EmbeddingDataset> {
        let d = &self.domains[i];
        gen_domain(&self.layout, d.instance_seed, &d.shift, &d.name)
    }

    /// The source or a target domain by name.
    pub fn dataset_named(&self, name: &str) -> Option<Result<EmbeddingDataset>> {
        if name == self.source.name {
            return Some(self.source_dataset());
        }
        let i = self.domains.iter().position(|d| d.name == name)?;
        Some(self.domain_dataset(i))
    }

    pub fn pretrain_model(&self) -> Result<Model<f32>> {
        pretrain_source(&self.source_dataset()?, &self.template(), &self.pretrain, derive(self.seed, 100))
    }

    pub fn episode_spec(&self, shot: usize) -> EpisodeSpec {
        EpisodeSpec {
            n_way: self.n_way,
            k_shot: shot,
            test_per_class: self.test_per_class,
        }
    }

    /// Evaluation episode `s` of a (domain, shot) cell.
    pub fn episode(&self, ds: &EmbeddingDataset, domain: usize, shot: usize, s: usize) -> Result<Episode> {
        sample_episode(ds, &self.episode_spec(shot), derive_path(self.seed, &[stream::EPISODE, domain as u64, shot as u64, s as u64]))
    }

    /// The episode MAP searches on; disjoint in seed from the evaluation ones.
    pub fn search_episode(&self, ds: &EmbeddingDataset, domain: usize, shot: usize) -> Result<Episode> {
        sample_episode(ds, &self.episode_spec(shot), derive_path(self.seed, &[stream::EPISODE, domain as u64, shot as u64, u64::MAX]))
    }

    pub fn pipeline_seed(&self, domain: usize, shot: usize, s: usize) -> u64 {
        derive_path(self.seed, &[stream::PIPELINE, domain as u64, shot as u64, s as u64])
    }

    pub fn protocol(&self, domain: usize, shot: usize, s: usize) -> CvProtocol {
        CvProtocol {
            folds: self.folds,
            train_fraction: 0.5,
            seed: derive_path(self.seed, &[stream::FOLDS, domain as u64, shot as u64, s as u64]),
        }
    }
}

/// The default desk suite: 10-way, 32 features, six target domains of growing
/// shift and an unshifted source.
pub fn default_suite() -> BenchSuite {
    let layout = ClassLayout {
        seed: 11,
        n_classes: 10,
        dim: 32,
        signal_dims: 8,
        separation: 1.0,
        nuisance_sigma: 1.5,
        per_class: 100,
    };
    let scale = |amp: f64, seed: u64| -> Vec<f64> {
        let mut r = rng_from(seed);
        (0..32)
            .map(|_| {
                use rand::Rng as _;
                (amp * r.random_range(-1.0..=1.0f64)).exp()
            })
            .collect()
    };
    let remap = |shift: usize| Some((0..10).map(|c| (c + shift) % 10).collect());
    let grades = [(0.15, 0.1, 0.0, 0.0), (0.3, 0.2, 0.1, 0.1), (0.45, 0.3, 0.2, 0.2), (0.6, 0.4, 0.3, 0.3), (0.75, 0.5, 0.4, 0.4), (0.9, 0.6, 0.5, 0.5)];
    let names = ["sketch", "painting", "clipart", "infograph", "quickdraw", "xray"];
    let domains = grades
        .iter()
        .zip(names)
        .enumerate()
        .map(|(i, (&(angle, amp, noise, skew), name))| DomainEntry {
            name: name.into(),
            instance_seed: 1000 + i as u64,
            shift: DomainShiftSpec {
                rotation_angle: angle,
                feature_scale: scale(amp, 50 + i as u64),
                noise_sigma: noise,
                class_prior_skew: skew,
                label_remap: remap(i + 1),
            },
        })
        .collect();
    BenchSuite {
        schema: BENCH_SCHEMA.into(),
        seed: 2024,
        layout,
        source: DomainEntry {
            name: "source".into(),
            instance_seed: 999,
            shift: DomainShiftSpec::identity(),
        },
        domains,
        pretrain: PretrainSpec::default(),
        n_way: 10,
        test_per_class: 20,
        seeds: 5,
        shots: vec![2, 5, 10, 20],
        approaches: vec![Approach::Pn, Approach::Ft, Approach::Map],
        search_budget: 400,
        folds: 5,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub approach: Approach,
    pub domain: String,
    pub shot: usize,
    pub seed_index: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapWinner {
    pub domain: String,
    pub shot: usize,
    pub config: PipelineConfig,
    pub cv_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub cells: Vec<BenchCell>,
    pub winners: Vec<MapWinner>,
    pub domains: Vec<String>,
    pub shots: Vec<usize>,
    pub approaches: Vec<Approach>,
}

impl BenchResult {
    /// Mean accuracy over seeds of one (approach, domain, shot) cell.
    pub fn mean(&self, approach: Approach, domain: &str, shot: usize) -> Option<f64> {
        let acc: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.approach == approach && c.domain == domain && c.shot == shot)
            .map(|c| c.accuracy)
            .collect();
        (!acc.is_empty()).then(|| acc.iter().sum::<f64>() / acc.len() as f64)
    }

    /// Rows = approaches, columns = domains then their mean; one block per shot.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("shot,approach");
        for d in &self.domains {
            out.push(',');
            out.push_str(d);
        }
        out.push_str(",mean\n");
        for &shot in &self.shots {
            for &a in &self.approaches {
                let means: Vec<f64> = self.domains.iter().map(|d| self.mean(a, d, shot).unwrap_or(f64::NAN)).collect();
                let _ = write!(out, "{shot},{}", a.label());
                for m in &means {
                    let _ = write!(out, ",{m}");
                }
                let _ = writeln!(out, ",{}", means.iter().sum::<f64>() / means.len() as f64);
            }
        }
        out
    }

    /// One row per (shot, approach, domain, seed).
    pub fn detail_csv(&self) -> String {
        let mut out = String::from("shot,approach,domain,seed,accuracy\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{},{},{}", c.shot, c.approach.label(), c.domain, c.seed_index, c.accuracy);
        }
        out
    }
}

/// Runs every (domain, shot) cell of the suite. Cells run in parallel and are
/// collected in suite order. `on_cell` receives `(domain, shot)` when a cell
/// finishes.
pub fn run_benchmark(
    suite: &BenchSuite,
    base: &Model<f32>,
    collection: Option<&PipelineCollection>,
    on_cell: &(dyn Fn(&str, usize) + Sync),
) -> Result<BenchResult> {
    suite.validate()?;
    if suite.approaches.contains(&Approach::MapTransfer) && collection.is_none() {
        return Err(Error::Config("MAP-transfer needs a pipeline collection".into()));
    }
    let datasets: Vec<EmbeddingDataset> = (0..suite.domains.len()).map(|i| suite.domain_dataset(i)).collect::<Result<_>>()?;
    let grid: Vec<(usize, usize)> = suite.shots.iter().flat_map(|&k| (0..suite.domains.len()).map(move |d| (k, d))).collect();
    let space = SearchSpace::pipeline();
    let results: Vec<(Vec<BenchCell>, Option<MapWinner>)> = grid
        .par_iter()
        .map(|&(shot, di)| {
            let r = run_cell(suite, base, collection, &space, &datasets[di], di, shot);
            on_cell(&suite.domains[di].name, shot);
            r
        })
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    let mut winners = Vec::new();
    for (c, w) in results {
        cells.extend(c);
        winners.extend(w);
    }
    Ok(BenchResult {
        cells,
        winners,
        domains: suite.domains.iter().map(|d| d.name.clone()).collect(),
        shots: suite.shots.clone(),
        approaches: suite.approaches.clone(),
    })
}

fn run_cell(
    suite: &BenchSuite,
    base: &Model<f32>,
    collection: Option<&PipelineCollection>,
    space: &SearchSpace,
    ds: &EmbeddingDataset,
    di: usize,
    shot: usize,
) -> Result<(Vec<BenchCell>, Option<MapWinner>)> {
    let name = &suite.domains[di].name;
    let episodes: Vec<Episode> = (0..suite.seeds).map(|s| suite.episode(ds, di, shot, s)).collect::<Result<_>>()?;
    let mut winner = None;
    let map_cfg = if suite.approaches.contains(&Approach::Map) {
        let ep = suite.search_episode(ds, di, shot)?;
        let options = SearchOptions::new(suite.search_budget, derive_path(suite.seed, &[stream::SUGGEST, di as u64, shot as u64]));
        let outcome = search_from_scratch(base, &ep.task, space, &suite.protocol(di, shot, usize::MAX), &options, &mut |_, _| {})?;
        let best = outcome.best_trial();
        winner = Some(MapWinner {
            domain: name.clone(),
            shot,
            config: best.config.clone(),
            cv_score: best.score,
        });
        Some(best.config.clone())
    } else {
        None
    };
    let mut cells = Vec::new();
    for &approach in &suite.approaches {
        for (s, ep) in episodes.iter().enumerate() {
            let cfg = match approach {
                Approach::Pn => PipelineConfig::preset(Preset::Pn),
                Approach::Ft => PipelineConfig::preset(Preset::Ft),
                Approach::Map => map_cfg.clone().expect("searched above"),
                Approach::MapTransfer => {
                    let coll = collection.expect("checked by run_benchmark");
                    let outcome = search_transfer(base, &ep.task, coll, &suite.protocol(di, shot, s), &mut |_, _| {})?;
                    outcome.best_trial().config.clone()
                }
            };
            // A failing adaptation scores 0, like a failed trial.
            let accuracy = run_pipeline(base, &ep.task, &cfg, suite.pipeline_seed(di, shot, s))
                .and_then(|m| evaluate(&m, &ep.test_x, &ep.test_y))
                .unwrap_or(0.0);
            cells.push(BenchCell {
                approach,
                domain: name.clone(),
                shot,
                seed_index: s,
                accuracy,
            });
        }
    }
    Ok((cells, winner))
}
