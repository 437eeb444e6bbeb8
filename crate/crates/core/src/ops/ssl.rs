//! Semi-supervised operators: pseudo-labeling, entropy minimization, mean
//! teacher and FixMatch.

use std::f64::consts::PI;

use super::train::{
    check_labeled, draw, ensure_finite, ensure_finite_model, entropy_term, epoch_batches, pseudo_term, steps_per_epoch,
    supervised_objective,
};
use super::{augment, needs_new_head, AdaptTask, Augmentation, EntropyHp, FixMatchHp, MeanTeacherHp, PseudoLabelHp};
use crate::error::{Error, Result};
use crate::loss::softmax_rows;
use crate::model::{Gradients, OptimizerKind, OptimizerSpec, OptimizerState};
use crate::rng::{derive, rng_from, stream, Rng};
use crate::tensor::{Matrix, Real};
use crate::Model;

/// EMA decay of the mean-teacher network.
pub const MEAN_TEACHER_EMA: f64 = 0.99;

/// Adam with fixed momentum and no decay, used by the operators that only
/// expose a single learning rate.
fn plain_adam(lr: f64) -> OptimizerSpec {
    OptimizerSpec {
        kind: OptimizerKind::Adam,
        lr_classifier: lr,
        lr_embed: lr,
        momentum: 0.9,
        decay: 0.0,
    }
}

/// Argmax targets for rows whose top probability reaches `threshold`.
fn confident_targets<T: Real>(scores: &Matrix<T>, threshold: f64) -> Vec<Option<usize>> {
    let probs = softmax_rows(scores);
    probs
        .iter_rows()
        .zip(probs.argmax_rows())
        .map(|(p, c)| (p[c].as_f64() >= threshold).then_some(c))
        .collect()
}

/// `CE(labeled) + w · Σ_selected CE(unlabeled, target) / denom`.
pub fn pseudo_label_objective<T: Real>(
    model: &Model<T>,
    xl: &Matrix<T>,
    yl: &[usize],
    xu: &Matrix<T>,
    targets: &[Option<usize>],
    weight: T,
) -> Result<(T, Gradients<T>)> {
    let (mut loss, mut grads) = supervised_objective(model, xl, yl)?;
    let (lu, gu) = pseudo_term(model, xu, targets, xu.rows())?;
    loss += weight * lu;
    grads.add_scaled(&gu, weight);
    Ok((loss, grads))
}

/// `CE(labeled) + w · Σ_{H ≤ threshold·ln C} H(softmax) / denom`.
pub fn entropy_objective<T: Real>(
    model: &Model<T>,
    xl: &Matrix<T>,
    yl: &[usize],
    xu: &Matrix<T>,
    threshold: f64,
    weight: T,
) -> Result<(T, Gradients<T>)> {
    let (mut loss, mut grads) = supervised_objective(model, xl, yl)?;
    let (lu, gu) = entropy_term(model, xu, threshold, xu.rows())?;
    loss += weight * lu;
    grads.add_scaled(&gu, weight);
    Ok((loss, grads))
}

/// State every semi-supervised loop shares.
struct Loop<T: Real> {
    student: Model<T>,
    state: OptimizerState<T>,
    labeled_rng: Rng,
    unlabeled_rng: Rng,
    pool: Vec<usize>,
}

impl<T: Real> Loop<T> {
    fn new(model: &Model<T>, task: &AdaptTask<T>, reinitialize: bool, seed: u64) -> Result<Self> {
        check_labeled(&task.labeled)?;
        let mut student = model.clone();
        if reinitialize || needs_new_head(&student, task.n_way) {
            student.reinitialize_head(task.n_way, derive(seed, stream::INIT));
        }
        let state = OptimizerState::for_model(&student);
        Ok(Self {
            student,
            state,
            labeled_rng: rng_from(derive(seed, stream::LABELED)),
            unlabeled_rng: rng_from(derive(seed, stream::UNLABELED)),
            pool: (0..task.unlabeled.rows()).collect(),
        })
    }

    fn labeled_batch(&mut self, task: &AdaptTask<T>, idx: &[usize], aug: Augmentation) -> (Matrix<T>, Vec<usize>) {
        let x = augment(&task.labeled.select_rows(idx), aug, &mut self.labeled_rng);
        (x, idx.iter().map(|&i| task.labels[i]).collect())
    }
}

/// Confidence-thresholded self-training; pseudo-labels are refreshed at the
/// start of every epoch.
pub fn ssl_pseudo_label<T: Real>(model: &Model<T>, task: &AdaptTask<T>, hp: &PseudoLabelHp, seed: u64) -> Result<Model<T>> {
    let mut lp = Loop::new(model, task, false, seed)?;
    let spec = plain_adam(hp.lr);
    let weight = T::lit(hp.pseudo_weight);
    let use_unlabeled = hp.pseudo_weight > 0.0 && !lp.pool.is_empty();
    let n = task.labeled.rows();
    let bs = hp.batch_size as usize;
    for epoch in 0..hp.epochs as usize {
        let (selected, targets) = if use_unlabeled {
            let t = confident_targets(&lp.student.predict(&task.unlabeled)?, hp.threshold);
            let sel: Vec<usize> = lp.pool.iter().copied().filter(|&u| t[u].is_some()).collect();
            (sel, t)
        } else {
            (Vec::new(), Vec::new())
        };
        for idx in epoch_batches(n, bs, &mut lp.labeled_rng) {
            let (xl, yl) = lp.labeled_batch(task, &idx, hp.aug_labeled);
            let (mut loss, mut grads) = supervised_objective(&lp.student, &xl, &yl)?;
            if !selected.is_empty() {
                let ui = draw(&selected, bs, &mut lp.unlabeled_rng);
                let xu = augment(&task.unlabeled.select_rows(&ui), hp.aug_unlabeled, &mut lp.unlabeled_rng);
                let tu: Vec<Option<usize>> = ui.iter().map(|&u| targets[u]).collect();
                let (lu, gu) = pseudo_term(&lp.student, &xu, &tu, bs)?;
                loss += weight * lu;
                grads.add_scaled(&gu, weight);
            }
            ensure_finite(loss, epoch)?;
            lp.state.step(&mut lp.student, &grads, &spec, 1.0)?;
        }
        ensure_finite_model(&lp.student, epoch)?;
    }
    Ok(lp.student)
}

/// Entropy minimization on confident unlabeled rows.
pub fn ssl_entropy<T: Real>(model: &Model<T>, task: &AdaptTask<T>, hp: &EntropyHp, seed: u64) -> Result<Model<T>> {
    let mut lp = Loop::new(model, task, false, seed)?;
    let spec = plain_adam(hp.lr);
    let weight = T::lit(hp.entropy_weight);
    let use_unlabeled = hp.entropy_weight > 0.0 && !lp.pool.is_empty();
    let n = task.labeled.rows();
    let bs = hp.batch_size as usize;
    for epoch in 0..hp.epochs as usize {
        for idx in epoch_batches(n, bs, &mut lp.labeled_rng) {
            let (xl, yl) = lp.labeled_batch(task, &idx, Augmentation::Normal);
            let (mut loss, mut grads) = supervised_objective(&lp.student, &xl, &yl)?;
            if use_unlabeled {
                let ui = draw(&lp.pool, bs, &mut lp.unlabeled_rng);
                let (lu, gu) = entropy_term(&lp.student, &task.unlabeled.select_rows(&ui), hp.threshold, bs)?;
                loss += weight * lu;
                grads.add_scaled(&gu, weight);
            }
            ensure_finite(loss, epoch)?;
            lp.state.step(&mut lp.student, &grads, &spec, 1.0)?;
        }
        ensure_finite_model(&lp.student, epoch)?;
    }
    Ok(lp.student)
}

/// Mean teacher with the default EMA decay; returns the student.
pub fn ssl_mean_teacher<T: Real>(model: &Model<T>, task: &AdaptTask<T>, hp: &MeanTeacherHp, seed: u64) -> Result<Model<T>> {
    Ok(mean_teacher_with_decay(model, task, hp, seed, MEAN_TEACHER_EMA)?.0)
}

/// Mean teacher at an explicit EMA decay; returns `(student, teacher)`.
pub fn mean_teacher_with_decay<T: Real>(
    model: &Model<T>,
    task: &AdaptTask<T>,
    hp: &MeanTeacherHp,
    seed: u64,
    ema_decay: f64,
) -> Result<(Model<T>, Model<T>)> {
    let mut lp = Loop::new(model, task, hp.reinitialize, seed)?;
    let mut teacher = lp.student.clone();
    let spec = hp.optimizer_spec();
    let weight = T::lit(hp.pseudo_weight);
    let decay = T::lit(ema_decay);
    let use_unlabeled = hp.pseudo_weight > 0.0 && !lp.pool.is_empty();
    let n = task.labeled.rows();
    let bs = hp.batch_size as usize;
    for epoch in 0..hp.epochs as usize {
        for idx in epoch_batches(n, bs, &mut lp.labeled_rng) {
            let (xl, yl) = lp.labeled_batch(task, &idx, hp.aug_labeled);
            let (mut loss, mut grads) = supervised_objective(&lp.student, &xl, &yl)?;
            if use_unlabeled {
                let ui = draw(&lp.pool, bs, &mut lp.unlabeled_rng);
                let raw = task.unlabeled.select_rows(&ui);
                let targets = confident_targets(&teacher.predict(&raw)?, hp.threshold);
                if targets.iter().any(Option::is_some) {
                    let xu = augment(&raw, hp.aug_unlabeled, &mut lp.unlabeled_rng);
                    let (lu, gu) = pseudo_term(&lp.student, &xu, &targets, bs)?;
                    loss += weight * lu;
                    grads.add_scaled(&gu, weight);
                }
            }
            ensure_finite(loss, epoch)?;
            lp.state.step(&mut lp.student, &grads, &spec, 1.0)?;
            teacher.ema_toward(&lp.student, decay);
        }
        ensure_finite_model(&lp.student, epoch)?;
    }
    Ok((lp.student, teacher))
}

/// `(labeled, unlabeled)` rows of a batch at ratio `1:r`, with
/// `labeled = max(1, round(batch / (1 + r)))`.
pub fn fixmatch_batch_split(batch: usize, ratio: u32) -> Result<(usize, usize)> {
    if !(1..=10).contains(&ratio) {
        return Err(Error::OutOfRange {
            field: "unlabeled_ratio".into(),
            value: f64::from(ratio),
            low: 1.0,
            high: 10.0,
        });
    }
    let labeled = ((batch as f64 / (1.0 + f64::from(ratio))).round() as usize).max(1);
    Ok((labeled, batch.saturating_sub(labeled)))
}

/// Linear warm-up over the first `ceil(0.1·total)` steps, then cosine decay
/// reaching 0 at the last step. `step` counts from 0.
pub fn warmup_cosine_scale(step: usize, total: usize) -> f64 {
    let warm = (0.1 * total as f64).ceil() as usize;
    if step < warm {
        return step as f64 / warm as f64;
    }
    let span = total.saturating_sub(1 + warm).max(1) as f64;
    let t = ((step - warm) as f64 / span).min(1.0);
    0.5 * (1.0 + (PI * t).cos())
}

/// FixMatch: confident predictions on weakly augmented unlabeled rows supervise
/// the strongly augmented view.
pub fn ssl_fixmatch<T: Real>(model: &Model<T>, task: &AdaptTask<T>, hp: &FixMatchHp, seed: u64) -> Result<Model<T>> {
    let (labeled, unlabeled) = fixmatch_batch_split(hp.batch_size as usize, hp.unlabeled_ratio)?;
    let mut lp = Loop::new(model, task, hp.reinitialize, seed)?;
    let mut teacher = hp.teacher.is_on().then(|| lp.student.clone());
    let decay = T::lit(MEAN_TEACHER_EMA);
    let spec = hp.optimizer_spec();
    let weight = T::lit(hp.pseudo_weight);
    let use_unlabeled = hp.pseudo_weight > 0.0 && !lp.pool.is_empty() && unlabeled > 0;
    let n = task.labeled.rows();
    let total = hp.epochs as usize * steps_per_epoch(n, labeled);
    let mut step = 0;
    for epoch in 0..hp.epochs as usize {
        for idx in epoch_batches(n, labeled, &mut lp.labeled_rng) {
            let (xl, yl) = lp.labeled_batch(task, &idx, Augmentation::Weak1);
            let (mut loss, mut grads) = supervised_objective(&lp.student, &xl, &yl)?;
            if use_unlabeled {
                let ui = draw(&lp.pool, unlabeled, &mut lp.unlabeled_rng);
                let raw = task.unlabeled.select_rows(&ui);
                let weak = augment(&raw, Augmentation::Weak1, &mut lp.unlabeled_rng);
                let strong = augment(&raw, Augmentation::Strong1, &mut lp.unlabeled_rng);
                let guide = teacher.as_ref().unwrap_or(&lp.student);
                let targets = confident_targets(&guide.predict(&weak)?, hp.threshold);
                if targets.iter().any(Option::is_some) {
                    let (lu, gu) = pseudo_term(&lp.student, &strong, &targets, unlabeled)?;
                    loss += weight * lu;
                    grads.add_scaled(&gu, weight);
                }
            }
            ensure_finite(loss, epoch)?;
            lp.state.step(&mut lp.student, &grads, &spec, warmup_cosine_scale(step, total))?;
            step += 1;
            if let Some(t) = teacher.as_mut() {
                t.ema_toward(&lp.student, decay);
            }
        }
        ensure_finite_model(&lp.student, epoch)?;
    }
    Ok(lp.student)
}
