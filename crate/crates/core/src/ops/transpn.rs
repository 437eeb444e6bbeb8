use super::{AdaptTask, TransPnHp};
use crate::error::{Error, Result};
use crate::loss::softmax_rows;
use crate::model::{power_scale, Head, PowerScale, PrototypeHead, COSINE_EPS};
use crate::tensor::{dot, Matrix, Real};
use crate::Model;

/// Replaces the head with scaled-cosine prototypes of power-scaled support
/// embeddings, optionally refined transductively on the unlabeled pool.
pub fn trans_pn<T: Real>(model: &Model<T>, task: &AdaptTask<T>, hp: &TransPnHp) -> Result<Model<T>> {
    let p = T::lit(hp.p);
    let tau = T::lit(hp.tau);
    let feats = scaled_embedding(model, &task.labeled, p)?;
    let (sums, counts) = class_sums(&feats, &task.labels, task.n_way)?;
    let no_soft = Matrix::zeros(0, task.n_way);
    let empty = Matrix::zeros(0, feats.cols());
    let mut prototypes = cipa_update(&sums, &counts, &empty, &no_soft, T::zero());
    if hp.cipa_switch.is_on() && task.unlabeled.rows() > 0 {
        let unlabeled = scaled_embedding(model, &task.unlabeled, p)?;
        let w = T::lit(hp.cipa_unlabeled_weight);
        for _ in 0..hp.cipa_rounds {
            let soft = softmax_rows(&prototype_scores(&unlabeled, &prototypes, tau));
            prototypes = cipa_update(&sums, &counts, &unlabeled, &soft, w);
        }
    }
    let mut m = model.clone();
    m.power_scale = Some(PowerScale { p });
    m.head = Head::Prototype(PrototypeHead { prototypes, tau });
    Ok(m)
}

fn scaled_embedding<T: Real>(model: &Model<T>, x: &Matrix<T>, p: T) -> Result<Matrix<T>> {
    let e = model.embed(x)?;
    let (r, c) = e.shape();
    Ok(Matrix::from_raw(r, c, power_scale(e.as_slice(), p)))
}

/// Per-class feature sums and counts; errors on a class without support.
pub fn class_sums<T: Real>(feats: &Matrix<T>, labels: &[usize], classes: usize) -> Result<(Matrix<T>, Vec<usize>)> {
    let mut sums = Matrix::zeros(classes, feats.cols());
    let mut counts = vec![0usize; classes];
    for (row, &y) in feats.iter_rows().zip(labels) {
        counts[y] += 1;
        for (s, &v) in sums.row_mut(y).iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    Ok((sums, counts))
}

/// `proto_c = (S_c + w Σ_u q_uc e_u) / (n_c + w Σ_u q_uc)`.
pub fn cipa_update<T: Real>(sums: &Matrix<T>, counts: &[usize], unlabeled: &Matrix<T>, soft: &Matrix<T>, w: T) -> Matrix<T> {
    let mut out = sums.clone();
    for (c, &n) in counts.iter().enumerate() {
        let mut mass = T::from_usize(n);
        let row = out.row_mut(c);
        for (e, q) in unlabeled.iter_rows().zip(soft.iter_rows()) {
            let wq = w * q[c];
            mass += wq;
            for (o, &v) in row.iter_mut().zip(e) {
                *o += wq * v;
            }
        }
        for o in row.iter_mut() {
            *o /= mass;
        }
    }
    out
}

/// `τ · cos(x_i, proto_c)` with the cosine head's norm floor.
pub fn prototype_scores<T: Real>(feats: &Matrix<T>, prototypes: &Matrix<T>, tau: T) -> Matrix<T> {
    let eps = T::lit(COSINE_EPS);
    let norm = |r: &[T]| dot(r, r).sqrt().max(eps);
    let pn: Vec<T> = prototypes.iter_rows().map(norm).collect();
    let mut out = Matrix::zeros(feats.rows(), prototypes.rows());
    for (i, x) in feats.iter_rows().enumerate() {
        let xn = norm(x);
        for (c, p) in prototypes.iter_rows().enumerate() {
            out.set(i, c, tau * dot(x, p) / (xn * pn[c]));
        }
    }
    out
}
