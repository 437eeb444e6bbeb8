use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::tensor::{Matrix, Real};

/// Feature-space augmentation levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Augmentation {
    /// Per-column standardization, no randomness.
    Norm,
    Normal,
    Weak1,
    Weak2,
    Strong1,
    Strong2,
}

impl Augmentation {
    pub const ALL: [Augmentation; 6] = [
        Augmentation::Norm,
        Augmentation::Normal,
        Augmentation::Weak1,
        Augmentation::Weak2,
        Augmentation::Strong1,
        Augmentation::Strong2,
    ];

    /// `(noise σ, dropout rate, per-column scale jitter)`.
    pub fn params(self) -> (f64, f64, f64) {
        match self {
            Augmentation::Norm => (0.0, 0.0, 0.0),
            Augmentation::Normal => (0.01, 0.0, 0.0),
            Augmentation::Weak1 => (0.05, 0.05, 0.0),
            Augmentation::Weak2 => (0.1, 0.1, 0.0),
            Augmentation::Strong1 => (0.2, 0.2, 0.2),
            Augmentation::Strong2 => (0.3, 0.3, 0.2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Augmentation::Norm => "norm",
            Augmentation::Normal => "normal",
            Augmentation::Weak1 => "weak1",
            Augmentation::Weak2 => "weak2",
            Augmentation::Strong1 => "strong1",
            Augmentation::Strong2 => "strong2",
        }
    }
}

/// `x' = keep ⊙ (s ⊙ x + σ·ε)`, drawing the column scales first and then,
/// row-major, one normal followed (when dropout is active) by one uniform per
/// entry.
pub fn augment<T: Real>(batch: &Matrix<T>, kind: Augmentation, rng: &mut Rng) -> Matrix<T> {
    if kind == Augmentation::Norm {
        return standardize(batch);
    }
    let (sigma, drop, jitter) = kind.params();
    let scales: Vec<f64> = (0..batch.cols())
        .map(|_| if jitter > 0.0 { rng.random_range(1.0 - jitter..=1.0 + jitter) } else { 1.0 })
        .collect();
    let mut out = batch.clone();
    let cols = batch.cols();
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        let noise = sigma * rng.sample::<f64, _>(StandardNormal);
        let kept = drop == 0.0 || rng.random::<f64>() >= drop;
        *v = if kept { T::lit(scales[i % cols] * v.as_f64() + noise) } else { T::zero() };
    }
    out
}

fn standardize<T: Real>(batch: &Matrix<T>) -> Matrix<T> {
    let (mean, var) = batch.column_moments();
    let cols = batch.cols();
    let mut out = batch.clone();
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        let j = i % cols;
        let centered = *v - mean[j];
        *v = if var[j] > T::zero() { centered / var[j].sqrt() } else { centered };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, rng_from};

    #[test]
    fn norm_fixes_standardized_batch() {
        let x = Matrix::<f64>::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let mut rng = rng_from(0);
        assert_eq!(augment(&x, Augmentation::Norm, &mut rng), x);
    }

    #[test]
    fn normal_on_zeros_is_scaled_gaussian_trace() {
        let seed = derive(3, crate::rng::stream::AUGMENT);
        let x = Matrix::<f64>::zeros(4, 3);
        let out = augment(&x, Augmentation::Normal, &mut rng_from(seed));
        let mut reference = rng_from(seed);
        for &v in out.as_slice() {
            let z: f64 = reference.sample(StandardNormal);
            assert_eq!(v, 0.01 * z);
        }
    }

    #[test]
    fn weak1_keeps_sign_of_kept_entries() {
        let x = Matrix::<f64>::new(100, 100, (0..10_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        let out = augment(&x, Augmentation::Weak1, &mut rng_from(11));
        let mut dropped = 0usize;
        for (a, b) in x.as_slice().iter().zip(out.as_slice()) {
            if *b == 0.0 {
                dropped += 1;
            } else {
                assert_eq!(a.signum(), b.signum());
            }
        }
        // binomial(1e4, 0.05): mean 500, sd ≈ 21.8
        assert!((400..=600).contains(&dropped), "dropped {dropped}");
    }

    #[test]
    fn strong_scales_within_band() {
        let x = Matrix::<f64>::new(1, 1000, vec![1.0; 1000]).unwrap();
        let mut rng = rng_from(5);
        let out = augment(&x, Augmentation::Strong1, &mut rng);
        for &v in out.as_slice() {
            assert!(v == 0.0 || (-0.5..2.5).contains(&v));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let x = Matrix::<f32>::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        for kind in Augmentation::ALL {
            let a = augment(&x, kind, &mut rng_from(9));
            let b = augment(&x, kind, &mut rng_from(9));
            assert_eq!(a, b, "{}", kind.name());
        }
    }

    #[test]
    fn serde_names() {
        for kind in Augmentation::ALL {
            let s = serde_json::to_string(&kind).unwrap();
            assert_eq!(s, format!("\"{}\"", kind.name()));
        }
        assert!(serde_json::from_str::<Augmentation>("\"heavy\"").is_err());
    }
}
