//! Finite-difference gradient oracle.
//!
//! Only evaluates the objective; it never calls into `backward`, so it can
//! check analytic gradients produced by the model.

use crate::model::{Gradients, Model};

/// Default stencil step.
pub const STEP: f64 = 1e-3;

/// Five-point central difference of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// `|a - b| <= rel · max(|a|, |b|) + abs`.
pub fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Numeric gradient of `objective` with respect to every trainable entry of `model`.
pub fn numeric_gradients(model: &Model<f64>, objective: impl Fn(&Model<f64>) -> f64, h: f64) -> Vec<Vec<f64>> {
    let sizes: Vec<usize> = model.params().iter().map(|(_, p)| p.len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (t, &len) in sizes.iter().enumerate() {
        let mut g = Vec::with_capacity(len);
        for k in 0..len {
            let base = model.params()[t].1[k];
            let f = |v: f64| {
                let mut m = model.clone();
                m.params_mut()[t].1[k] = v;
                objective(&m)
            };
            g.push(central_difference(f, base, h));
        }
        out.push(g);
    }
    out
}

/// Compares analytic gradients against the numeric oracle; returns every entry
/// outside `rel`/`abs` tolerance.
pub fn compare(
    model: &Model<f64>,
    objective: impl Fn(&Model<f64>) -> f64,
    analytic: &Gradients<f64>,
    rel: f64,
    abs: f64,
) -> Vec<Mismatch> {
    let numeric = numeric_gradients(model, objective, STEP);
    let mut bad = Vec::new();
    for (t, (a, n)) in analytic.tensors.iter().zip(&numeric).enumerate() {
        for (index, (&av, &nv)) in a.iter().zip(n).enumerate() {
            if !close(av, nv, rel, abs) {
                bad.push(Mismatch {
                    tensor: t,
                    index,
                    analytic: av,
                    numeric: nv,
                });
            }
        }
    }
    if analytic.tensors.len() != numeric.len() {
        bad.push(Mismatch {
            tensor: analytic.tensors.len(),
            index: 0,
            analytic: f64::NAN,
            numeric: f64::NAN,
        });
    }
    bad
}
