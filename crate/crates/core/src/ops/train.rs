//! Shared pieces of the gradient-based operators.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::loss::{cross_entropy, entropy_loss, row_entropies};
use crate::model::{Gradients, Mode};
use crate::rng::Rng;
use crate::tensor::{Matrix, Real};
use crate::Model;

/// Learning-rate multiplier under step decay: 1-based step indices above
/// `ceil(fraction · total)` train at 0.1×.
pub fn lr_step_scale(step: usize, total: usize, fraction: f64) -> f64 {
    let boundary = (fraction * total as f64).ceil() as usize;
    if step > boundary {
        0.1
    } else {
        1.0
    }
}

/// Number of minibatches that cover `n` rows once.
pub(crate) fn steps_per_epoch(n: usize, batch: usize) -> usize {
    n.div_ceil(batch.clamp(1, n.max(1)))
}

/// A fresh shuffle of `0..n` cut into chunks of at most `batch`.
pub(crate) fn epoch_batches(n: usize, batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch.clamp(1, n.max(1))).map(<[usize]>::to_vec).collect()
}

/// `count` uniform draws with replacement from `pool`.
pub(crate) fn draw(pool: &[usize], count: usize, rng: &mut Rng) -> Vec<usize> {
    use rand::Rng as _;
    (0..count).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

/// Mean cross-entropy on a labeled batch and its parameter gradients.
/// Batch-norm layers run in evaluation mode.
pub fn supervised_objective<T: Real>(model: &Model<T>, x: &Matrix<T>, labels: &[usize]) -> Result<(T, Gradients<T>)> {
    let targets: Vec<Option<usize>> = labels.iter().copied().map(Some).collect();
    pseudo_term(model, x, &targets, x.rows())
}

/// Cross-entropy over the rows with a target, summed and divided by `denom`.
pub(crate) fn pseudo_term<T: Real>(
    model: &Model<T>,
    x: &Matrix<T>,
    targets: &[Option<usize>],
    denom: usize,
) -> Result<(T, Gradients<T>)> {
    let mut scratch = model.clone();
    let (scores, cache) = scratch.forward_cached(x, Mode::Eval)?;
    let (loss, grad) = cross_entropy(&scores, targets, denom);
    Ok((loss, model.backward(&cache, &grad)?))
}

/// Entropy of the rows whose normalized entropy is at most `threshold`,
/// summed and divided by `denom`.
pub(crate) fn entropy_term<T: Real>(model: &Model<T>, x: &Matrix<T>, threshold: f64, denom: usize) -> Result<(T, Gradients<T>)> {
    let mut scratch = model.clone();
    let (scores, cache) = scratch.forward_cached(x, Mode::Eval)?;
    let mask = entropy_mask(&scores, threshold);
    let (loss, grad) = entropy_loss(&scores, &mask, denom);
    Ok((loss, model.backward(&cache, &grad)?))
}

/// Rows with `H(softmax) ≤ threshold · ln C`.
pub(crate) fn entropy_mask<T: Real>(scores: &Matrix<T>, threshold: f64) -> Vec<bool> {
    let norm = (scores.cols().max(2) as f64).ln();
    row_entropies(scores).into_iter().map(|h| h.as_f64() <= threshold * norm).collect()
}

pub(crate) fn ensure_finite<T: Real>(loss: T, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged { epoch })
    }
}

pub(crate) fn ensure_finite_model<T: Real>(model: &Model<T>, epoch: usize) -> Result<()> {
    if model.params().iter().all(|(_, p)| p.iter().all(|v| v.is_finite())) {
        Ok(())
    } else {
        Err(Error::Diverged { epoch })
    }
}

pub(crate) fn check_labeled<T: Real>(x: &Matrix<T>) -> Result<()> {
    if x.rows() == 0 {
        Err(Error::InvalidTask("no labeled examples".into()))
    } else {
        Ok(())
    }
}
