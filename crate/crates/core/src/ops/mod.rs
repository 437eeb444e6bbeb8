//! The seven adaptation operators. Each maps `(model, task, hyperparameters,
//! seed)` to a new model and never mutates its input.
//!
//! Finetuning and the semi-supervised operators train with batch-norm layers
//! in evaluation mode (running statistics normalize, gradients reach `γ`/`β`).
//! Only [`tune_bn`] moves running statistics.

mod augment;
mod finetune;
mod hp;
mod ssl;
pub(crate) mod train;
mod transpn;
mod tunebn;

pub use augment::{augment, Augmentation};
pub use finetune::finetune;
pub use hp::{EntropyHp, FinetuneHp, FixMatchHp, MeanTeacherHp, PseudoLabelHp, Switch, TransPnHp, TuneBnHp};
pub use ssl::{
    entropy_objective, fixmatch_batch_split, mean_teacher_with_decay, pseudo_label_objective, ssl_entropy, ssl_fixmatch,
    ssl_mean_teacher, ssl_pseudo_label, warmup_cosine_scale, MEAN_TEACHER_EMA,
};
pub use train::{lr_step_scale, supervised_objective};
pub use transpn::{cipa_update, class_sums, prototype_scores, trans_pn};
pub use tunebn::tune_bn;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real};

/// Labeled support set, unlabeled pool and the episode's way/shot.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptTask<T = f32> {
    pub labeled: Matrix<T>,
    pub labels: Vec<usize>,
    pub unlabeled: Matrix<T>,
    pub n_way: usize,
    pub k_shot: usize,
}

impl<T: Real> AdaptTask<T> {
    pub fn new(labeled: Matrix<T>, labels: Vec<usize>, unlabeled: Matrix<T>, n_way: usize, k_shot: usize) -> Result<Self> {
        if n_way == 0 || k_shot == 0 {
            return Err(Error::InvalidTask("n_way and k_shot must be at least 1".into()));
        }
        if labeled.rows() != n_way * k_shot {
            return Err(Error::InvalidTask(format!(
                "{n_way}-way {k_shot}-shot needs {} labeled rows, found {}",
                n_way * k_shot,
                labeled.rows()
            )));
        }
        if labels.len() != labeled.rows() {
            return Err(Error::shape("task labels", labeled.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_way) {
            return Err(Error::InvalidTask(format!("label {bad} outside [0, {n_way})")));
        }
        if unlabeled.rows() > 0 && unlabeled.cols() != labeled.cols() {
            return Err(Error::shape("unlabeled columns", labeled.cols(), unlabeled.cols()));
        }
        Ok(Self {
            labeled,
            labels,
            unlabeled,
            n_way,
            k_shot,
        })
    }

    pub fn with_unlabeled(&self, unlabeled: Matrix<T>) -> Self {
        Self {
            unlabeled,
            ..self.clone()
        }
    }

    /// Same labeled data, empty unlabeled pool.
    pub fn supervised_only(&self) -> Self {
        self.with_unlabeled(Matrix::zeros(0, self.labeled.cols()))
    }

    pub fn cast<U: Real>(&self) -> AdaptTask<U> {
        AdaptTask {
            labeled: self.labeled.cast(),
            labels: self.labels.clone(),
            unlabeled: self.unlabeled.cast(),
            n_way: self.n_way,
            k_shot: self.k_shot,
        }
    }
}

/// Rejects a model whose head cannot score `n_way` classes and whose head is
/// not going to be replaced.
pub(crate) fn needs_new_head<T: Real>(model: &crate::Model<T>, n_way: usize) -> bool {
    model.num_classes() != n_way
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::model::{gaussian_matrix, ModelTemplate};
    use crate::rng::rng_from;
    use crate::Model;

    /// Gaussian blobs around well separated class centers.
    pub fn blobs<T: Real>(n_way: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> (Matrix<T>, Vec<usize>) {
        let mut rng = rng_from(seed);
        let centers: Matrix<f64> = gaussian_matrix(n_way, dim, 3.0, &mut rng);
        let noise: Matrix<f64> = gaussian_matrix(n_way * per_class, dim, spread, &mut rng);
        let mut data = Vec::with_capacity(n_way * per_class * dim);
        let mut labels = Vec::new();
        for c in 0..n_way {
            for i in 0..per_class {
                let r = c * per_class + i;
                for j in 0..dim {
                    data.push(T::lit(centers.get(c, j) + noise.get(r, j)));
                }
                labels.push(c);
            }
        }
        (Matrix::from_raw(n_way * per_class, dim, data), labels)
    }

    pub fn task<T: Real>(n_way: usize, k_shot: usize, unlabeled_per_class: usize, dim: usize, seed: u64) -> AdaptTask<T> {
        let (x, y) = blobs::<T>(n_way, k_shot + unlabeled_per_class, dim, 0.7, seed);
        let mut li = Vec::new();
        let mut ui = Vec::new();
        for c in 0..n_way {
            for i in 0..k_shot + unlabeled_per_class {
                let r = c * (k_shot + unlabeled_per_class) + i;
                if i < k_shot {
                    li.push(r)
                } else {
                    ui.push(r)
                }
            }
        }
        let labels = li.iter().map(|&r| y[r]).collect();
        AdaptTask::new(x.select_rows(&li), labels, x.select_rows(&ui), n_way, k_shot).unwrap()
    }

    pub fn model<T: Real>(dim: usize, classes: usize, seed: u64) -> Model<T> {
        ModelTemplate {
            input_width: dim,
            hidden: vec![8, 6],
            batch_norm: true,
            classes,
        }
        .build(seed)
        .unwrap()
    }
}
