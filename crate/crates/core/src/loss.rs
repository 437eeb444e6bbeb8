//! Loss terms over class scores, each returning its value and `dL/dscores`.

use crate::tensor::{Matrix, Real};

/// Row-wise log-softmax.
pub fn log_softmax_rows<T: Real>(scores: &Matrix<T>) -> Matrix<T> {
    let mut out = scores.clone();
    for i in 0..out.rows() {
        let r = out.row_mut(i);
        let max = r.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + r.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        r.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

pub fn softmax_rows<T: Real>(scores: &Matrix<T>) -> Matrix<T> {
    log_softmax_rows(scores).map(|v| v.exp())
}

/// Shannon entropy (nats) of each row's softmax.
pub fn row_entropies<T: Real>(scores: &Matrix<T>) -> Vec<T> {
    let logp = log_softmax_rows(scores);
    logp.iter_rows().map(|r| -r.iter().map(|&l| l.exp() * l).sum::<T>()).collect()
}

/// `Σ_rows CE(row, label) / denom`. Rows with `None` labels contribute nothing.
pub fn cross_entropy<T: Real>(scores: &Matrix<T>, labels: &[Option<usize>], denom: usize) -> (T, Matrix<T>) {
    let logp = log_softmax_rows(scores);
    let d = T::from_usize(denom.max(1));
    let mut grad = Matrix::zeros(scores.rows(), scores.cols());
    let mut loss = T::zero();
    for (i, label) in labels.iter().enumerate() {
        let Some(y) = *label else { continue };
        let lp = logp.row(i);
        loss -= lp[y];
        let g = grad.row_mut(i);
        for (j, gv) in g.iter_mut().enumerate() {
            *gv = lp[j].exp() / d;
        }
        g[y] -= T::one() / d;
    }
    (loss / d, grad)
}

/// Convenience form of [`cross_entropy`] with every row labeled, averaged over rows.
pub fn mean_cross_entropy<T: Real>(scores: &Matrix<T>, labels: &[usize]) -> (T, Matrix<T>) {
    let l: Vec<Option<usize>> = labels.iter().map(|&y| Some(y)).collect();
    cross_entropy(scores, &l, labels.len())
}

/// `Σ_{masked rows} H(softmax(row)) / denom`.
pub fn entropy_loss<T: Real>(scores: &Matrix<T>, mask: &[bool], denom: usize) -> (T, Matrix<T>) {
    let logp = log_softmax_rows(scores);
    let d = T::from_usize(denom.max(1));
    let mut grad = Matrix::zeros(scores.rows(), scores.cols());
    let mut loss = T::zero();
    for (i, &on) in mask.iter().enumerate() {
        if !on {
            continue;
        }
        let lp = logp.row(i);
        let h = -lp.iter().map(|&l| l.exp() * l).sum::<T>();
        loss += h;
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            // dH/dz_j = -p_j (log p_j + H)
            *g = -(lp[j].exp()) * (lp[j] + h) / d;
        }
    }
    (loss / d, grad)
}
