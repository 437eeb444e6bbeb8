use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::ops::AdaptTask;
use crate::rng::rng_from;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
}

fn default_test_per_class() -> usize {
    20
}

impl EpisodeSpec {
    pub fn new(n_way: usize, k_shot: usize) -> Self {
        Self {
            n_way,
            k_shot,
            test_per_class: default_test_per_class(),
        }
    }
}

/// An adaptation task plus its labeled held-out test set. The task's
/// unlabeled pool holds the test features in shuffled order.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub task: AdaptTask<f32>,
    pub test_x: Matrix<f32>,
    pub test_y: Vec<usize>,
    /// Dataset class behind each episode label.
    pub classes: Vec<usize>,
    pub support_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

pub fn sample_episode(ds: &EmbeddingDataset, spec: &EpisodeSpec, seed: u64) -> Result<Episode> {
    if spec.n_way < 1 || spec.k_shot < 1 || spec.test_per_class < 1 {
        return Err(Error::Config("n_way, k_shot and test_per_class must be at least 1".into()));
    }
    let by_class = ds.class_rows();
    if by_class.len() < spec.n_way {
        return Err(Error::InvalidTask(format!("{}-way episode from {} classes", spec.n_way, by_class.len())));
    }
    let mut rng = rng_from(seed);
    let classes: Vec<usize> = if by_class.len() == spec.n_way {
        (0..spec.n_way).collect()
    } else {
        let mut c: Vec<usize> = (0..by_class.len()).collect::<Vec<_>>().choose_multiple(&mut rng, spec.n_way).copied().collect();
        c.sort_unstable();
        c
    };
    let need = spec.k_shot + spec.test_per_class;
    let mut support_rows = Vec::new();
    let mut support_y = Vec::new();
    let mut test_rows = Vec::new();
    let mut test_y = Vec::new();
    for (label, &c) in classes.iter().enumerate() {
        let mut rows = by_class[c].clone();
        if rows.len() < need {
            return Err(Error::InsufficientExamples {
                class: c,
                available: rows.len(),
                required: need,
            });
        }
        rows.shuffle(&mut rng);
        support_rows.extend_from_slice(&rows[..spec.k_shot]);
        support_y.extend(std::iter::repeat_n(label, spec.k_shot));
        test_rows.extend_from_slice(&rows[spec.k_shot..need]);
        test_y.extend(std::iter::repeat_n(label, spec.test_per_class));
    }
    let mut pool = test_rows.clone();
    pool.shuffle(&mut rng);
    let task = AdaptTask::new(
        ds.features.select_rows(&support_rows),
        support_y,
        ds.features.select_rows(&pool),
        spec.n_way,
        spec.k_shot,
    )?;
    Ok(Episode {
        task,
        test_x: ds.features.select_rows(&test_rows),
        test_y,
        classes,
        support_rows,
        test_rows,
    })
}
