use super::train::draw;
use super::{AdaptTask, TuneBnHp};
use crate::error::{Error, Result};
use crate::rng::{derive, rng_from, stream};
use crate::tensor::Real;
use crate::Model;

/// Re-estimates batch-norm running statistics from random unlabeled batches.
pub fn tune_bn<T: Real>(model: &Model<T>, task: &AdaptTask<T>, hp: &TuneBnHp, seed: u64) -> Result<Model<T>> {
    if !model.has_batch_norm() {
        return Ok(model.clone());
    }
    if task.unlabeled.rows() == 0 {
        return Err(Error::EmptyUnlabeled);
    }
    let mut m = model.clone();
    m.set_norm_momentum(T::lit(hp.momentum_entry));
    let pool: Vec<usize> = (0..task.unlabeled.rows()).collect();
    let mut rng = rng_from(derive(seed, stream::UNLABELED));
    for _ in 0..hp.iterations {
        let idx = draw(&pool, hp.batch_size as usize, &mut rng);
        m.update_norm_statistics(&task.unlabeled.select_rows(&idx))?;
    }
    Ok(m)
}
