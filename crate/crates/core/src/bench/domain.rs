use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::rng::{derive, rng_from, Rng};
use crate::tensor::Matrix;

/// Class structure shared by every domain of a suite: class means live in the
/// first `signal_dims` coordinates, the remaining ones carry nuisance noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassLayout {
    pub seed: u64,
    pub n_classes: usize,
    pub dim: usize,
    pub signal_dims: usize,
    /// Standard deviation of class-mean coordinates.
    pub separation: f64,
    /// Within-class standard deviation of nuisance coordinates (signal ones use 1).
    pub nuisance_sigma: f64,
    pub per_class: usize,
}

impl ClassLayout {
    pub fn new(seed: u64, n_classes: usize, dim: usize) -> Self {
        Self {
            seed,
            n_classes,
            dim,
            signal_dims: dim / 4,
            separation: 1.0,
            nuisance_sigma: 1.0,
            per_class: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 || self.dim < 2 {
            return Err(Error::Config("a domain needs at least 2 classes and 2 dimensions".into()));
        }
        if self.signal_dims == 0 || self.signal_dims > self.dim {
            return Err(Error::Config(format!("signal_dims must lie in [1, {}]", self.dim)));
        }
        if !(self.separation > 0.0 && self.nuisance_sigma >= 0.0) || self.per_class == 0 {
            return Err(Error::Config("separation must be positive, nuisance_sigma non-negative, per_class ≥ 1".into()));
        }
        Ok(())
    }

    fn means(&self) -> Vec<Vec<f64>> {
        let mut rng = rng_from(self.seed);
        (0..self.n_classes)
            .map(|_| {
                (0..self.dim)
                    .map(|j| if j < self.signal_dims { self.separation * rng.sample::<f64, _>(StandardNormal) } else { 0.0 })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainShiftSpec {
    /// Angle of the Givens rotations on planes `(i, i + dim/2)`.
    pub rotation_angle: f64,
    /// Per-feature multipliers; empty means all ones.
    #[serde(default)]
    pub feature_scale: Vec<f64>,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Class `c` receives `round(skew · per_class · c / (C − 1))` extra examples.
    #[serde(default)]
    pub class_prior_skew: f64,
    #[serde(default)]
    pub label_remap: Option<Vec<usize>>,
}

impl DomainShiftSpec {
    pub fn identity() -> Self {
        Self {
            rotation_angle: 0.0,
            feature_scale: Vec::new(),
            noise_sigma: 0.0,
            class_prior_skew: 0.0,
            label_remap: None,
        }
    }

    pub fn validate(&self, layout: &ClassLayout) -> Result<()> {
        if !self.rotation_angle.is_finite() {
            return Err(Error::Config("rotation_angle must be finite".into()));
        }
        if !self.feature_scale.is_empty() && self.feature_scale.len() != layout.dim {
            return Err(Error::Config(format!("feature_scale needs {} entries", layout.dim)));
        }
        if self.feature_scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("feature_scale entries must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.class_prior_skew >= 0.0) {
            return Err(Error::Config("noise_sigma and class_prior_skew must be non-negative".into()));
        }
        if let Some(map) = &self.label_remap {
            let mut seen = vec![false; layout.n_classes];
            if map.len() != layout.n_classes || map.iter().any(|&c| c >= layout.n_classes || std::mem::replace(&mut seen[c], true)) {
                return Err(Error::Config("label_remap must be a permutation of the classes".into()));
            }
        }
        Ok(())
    }
}

/// Rotates `x` in place by `angle` on every plane `(i, i + ⌈d/2⌉)`.
pub fn givens_rotation(x: &mut [f64], angle: f64) {
    if angle == 0.0 {
        return;
    }
    let (s, c) = angle.sin_cos();
    let half = x.len().div_ceil(2);
    for i in 0..x.len() / 2 {
        let (a, b) = (x[i], x[i + half]);
        x[i] = c * a - s * b;
        x[i + half] = s * a + c * b;
    }
}

fn draw_instance(layout: &ClassLayout, mean: &[f64], rng: &mut Rng) -> Vec<f64> {
    mean.iter()
        .enumerate()
        .map(|(j, m)| {
            let sd = if j < layout.signal_dims { 1.0 } else { layout.nuisance_sigma };
            m + sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// A domain of the layout: base instances from `base_seed`, then rotation,
/// feature scaling, extra noise, prior skew and label remapping.
pub fn gen_domain(layout: &ClassLayout, base_seed: u64, spec: &DomainShiftSpec, tag: impl Into<String>) -> Result<EmbeddingDataset> {
    layout.validate()?;
    spec.validate(layout)?;
    let means = layout.means();
    let mut base_rng = rng_from(derive(base_seed, 0));
    let mut extra_rng = rng_from(derive(base_seed, 1));
    let mut noise_rng = rng_from(derive(base_seed, 2));
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..layout.per_class {
            rows.push((draw_instance(layout, mean, &mut base_rng), c));
        }
    }
    if spec.class_prior_skew > 0.0 {
        for (c, mean) in means.iter().enumerate() {
            let extra = (spec.class_prior_skew * layout.per_class as f64 * c as f64 / (layout.n_classes - 1) as f64).round() as usize;
            for _ in 0..extra {
                rows.push((draw_instance(layout, mean, &mut extra_rng), c));
            }
        }
    }
    let mut data = Vec::with_capacity(rows.len() * layout.dim);
    let mut labels = Vec::with_capacity(rows.len());
    for (mut x, c) in rows {
        givens_rotation(&mut x, spec.rotation_angle);
        for (j, v) in x.iter_mut().enumerate() {
            if let Some(s) = spec.feature_scale.get(j) {
                *v *= s;
            }
            if spec.noise_sigma > 0.0 {
                *v += spec.noise_sigma * noise_rng.sample::<f64, _>(StandardNormal);
            }
        }
        data.extend(x.iter().map(|&v| v as f32));
        labels.push(spec.label_remap.as_ref().map_or(c, |m| m[c]));
    }
    let features = Matrix::new(labels.len(), layout.dim, data)?;
    EmbeddingDataset::new(features, labels, None, tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ClassLayout {
        ClassLayout {
            per_class: 20,
            ..ClassLayout::new(7, 4, 8)
        }
    }

    #[test]
    fn identity_shift_is_base_domain() {
        let a = gen_domain(&layout(), 3, &DomainShiftSpec::identity(), "a").unwrap();
        let spec = DomainShiftSpec {
            feature_scale: vec![1.0; 8],
            label_remap: Some(vec![0, 1, 2, 3]),
            ..DomainShiftSpec::identity()
        };
        let b = gen_domain(&layout(), 3, &spec, "a").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.features.rows(), 80);
    }

    #[test]
    fn half_turn_negates_two_dim_features() {
        let l = ClassLayout {
            signal_dims: 2,
            ..ClassLayout::new(1, 3, 2)
        };
        let base = gen_domain(&l, 5, &DomainShiftSpec::identity(), "b").unwrap();
        let spec = DomainShiftSpec {
            rotation_angle: std::f64::consts::PI,
            ..DomainShiftSpec::identity()
        };
        let rot = gen_domain(&l, 5, &spec, "r").unwrap();
        for (a, b) in base.features.as_slice().iter().zip(rot.features.as_slice()) {
            assert!((a + b).abs() < 1e-5 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn regeneration_is_bitwise_identical() {
        let spec = DomainShiftSpec {
            rotation_angle: 0.4,
            noise_sigma: 0.3,
            class_prior_skew: 0.5,
            label_remap: Some(vec![3, 2, 1, 0]),
            feature_scale: (0..8).map(|j| 1.0 + j as f64 / 10.0).collect(),
        };
        let a = gen_domain(&layout(), 9, &spec, "x").unwrap();
        let b = gen_domain(&layout(), 9, &spec, "x").unwrap();
        assert_eq!(a.features.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.features.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        // skew adds round(0.5·20·c/3) rows to class c
        let counts = a.class_rows().iter().map(Vec::len).collect::<Vec<_>>();
        assert_eq!(counts, [20 + 10, 20 + 7, 20 + 3, 20]);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad_scale = DomainShiftSpec {
            feature_scale: vec![1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            ..DomainShiftSpec::identity()
        };
        assert!(gen_domain(&layout(), 0, &bad_scale, "x").is_err());
        let bad_map = DomainShiftSpec {
            label_remap: Some(vec![0, 0, 1, 2]),
            ..DomainShiftSpec::identity()
        };
        assert!(gen_domain(&layout(), 0, &bad_map, "x").is_err());
    }
}
