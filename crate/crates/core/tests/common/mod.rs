#![allow(dead_code)]

use adapipe::ops::AdaptTask;
use adapipe::rng::rng_from;
use adapipe::{Matrix, Model, ModelTemplate, Real};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rows: usize, cols: usize, sigma: f64, seed: u64) -> Matrix<f64> {
    let mut rng = rng_from(seed);
    let data = (0..rows * cols).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

/// `n_way` Gaussian blobs; the first `k_shot` rows of each class are labeled,
/// the next `unlabeled` go to the pool.
pub fn blob_task<T: Real>(n_way: usize, k_shot: usize, unlabeled: usize, dim: usize, spread: f64, seed: u64) -> AdaptTask<T> {
    let centers = gaussian(n_way, dim, 3.0, seed);
    let per = k_shot + unlabeled;
    let noise = gaussian(n_way * per, dim, spread, seed ^ 0xABCD);
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut ux = Vec::new();
    for c in 0..n_way {
        for i in 0..per {
            let row: Vec<T> = (0..dim).map(|j| T::lit(centers.get(c, j) + noise.get(c * per + i, j))).collect();
            if i < k_shot {
                lx.extend(row);
                ly.push(c);
            } else {
                ux.extend(row);
            }
        }
    }
    AdaptTask::new(
        Matrix::new(n_way * k_shot, dim, lx).unwrap(),
        ly,
        Matrix::new(n_way * unlabeled, dim, ux).unwrap(),
        n_way,
        k_shot,
    )
    .unwrap()
}

pub fn small_model<T: Real>(dim: usize, classes: usize, seed: u64) -> Model<T> {
    ModelTemplate {
        input_width: dim,
        hidden: vec![8, 6],
        batch_norm: true,
        classes,
    }
    .build(seed)
    .unwrap()
}

/// Gives batch-norm layers non-trivial running statistics and affine terms.
pub fn perturb_norms(model: &mut Model<f64>, seed: u64) {
    let mut r = rng_from(seed);
    for l in &mut model.layers {
        if let Some(bn) = l.norm.as_mut() {
            for v in bn.running_mean.iter_mut() {
                *v = 0.3 * r.sample::<f64, _>(StandardNormal);
            }
            for v in bn.running_var.iter_mut() {
                *v = 0.5 + r.random::<f64>();
            }
            for v in bn.gamma.iter_mut() {
                *v = 0.8 + 0.4 * r.random::<f64>();
            }
            for v in bn.beta.iter_mut() {
                *v = 0.5 + 0.2 * r.sample::<f64, _>(StandardNormal);
            }
        }
    }
}

/// Smallest |pre-activation| over every ReLU unit for inputs `x` in
/// evaluation mode. Finite differences are only meaningful away from kinks.
pub fn relu_margin(model: &Model<f64>, x: &Matrix<f64>) -> f64 {
    use adapipe::model::Activation;
    let mut h: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
    let mut margin = f64::INFINITY;
    for l in &model.layers {
        let w = &l.dense.weight;
        for row in h.iter_mut() {
            let mut z: Vec<f64> = (0..w.cols())
                .map(|j| l.dense.bias[j] + row.iter().enumerate().map(|(k, v)| v * w.get(k, j)).sum::<f64>())
                .collect();
            if let Some(bn) = &l.norm {
                for (j, v) in z.iter_mut().enumerate() {
                    *v = (*v - bn.running_mean[j]) / (bn.running_var[j] + 1e-5).sqrt() * bn.gamma[j] + bn.beta[j];
                }
            }
            if l.activation == Activation::Relu {
                margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            *row = z;
        }
    }
    margin
}
