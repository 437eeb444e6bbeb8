use super::train::{check_labeled, ensure_finite, ensure_finite_model, epoch_batches, lr_step_scale, steps_per_epoch, supervised_objective};
use super::{augment, needs_new_head, AdaptTask, FinetuneHp};
use crate::error::Result;
use crate::model::OptimizerState;
use crate::rng::{derive, rng_from, stream};
use crate::tensor::Real;
use crate::Model;

/// Supervised finetuning of encoder and head on the labeled set.
pub fn finetune<T: Real>(model: &Model<T>, task: &AdaptTask<T>, hp: &FinetuneHp, seed: u64) -> Result<Model<T>> {
    check_labeled(&task.labeled)?;
    let mut m = model.clone();
    if hp.reinitialize || needs_new_head(&m, task.n_way) {
        m.reinitialize_head(task.n_way, derive(seed, stream::INIT));
    }
    let spec = hp.optimizer_spec();
    let mut state = OptimizerState::for_model(&m);
    let mut batch_rng = rng_from(derive(seed, stream::LABELED));
    let mut aug_rng = rng_from(derive(seed, stream::AUGMENT));
    let n = task.labeled.rows();
    let batch = hp.batch_size as usize;
    let total = hp.epochs as usize * steps_per_epoch(n, batch);
    let mut step = 0;
    for epoch in 0..hp.epochs as usize {
        for idx in epoch_batches(n, batch, &mut batch_rng) {
            step += 1;
            let x = augment(&task.labeled.select_rows(&idx), hp.aug, &mut aug_rng);
            let y: Vec<usize> = idx.iter().map(|&i| task.labels[i]).collect();
            let (loss, grads) = supervised_objective(&m, &x, &y)?;
            ensure_finite(loss, epoch)?;
            state.step(&mut m, &grads, &spec, lr_step_scale(step, total, hp.step))?;
        }
        ensure_finite_model(&m, epoch)?;
    }
    Ok(m)
}
