//! Tree-structured Parzen Estimator over a [`SearchSpace`].
//!
//! Scores are maximized. After `n_startup` observations the history is split
//! at the γ-quantile; each dimension gets an independent Parzen density for
//! the good and the bad set and the best of `n_ei` candidates drawn from the
//! good densities under `Σ_d log l_d(x) − log g_d(x)` is returned.

use rand::Rng as _;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;

use super::space::{DimKind, Dimension, Point, SearchSpace};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpeSettings {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_ei: usize,
    /// Weight of the uniform prior component (in units of one observation).
    pub prior_weight: f64,
}

impl Default for TpeSettings {
    fn default() -> Self {
        Self {
            n_startup: 20,
            gamma: 0.25,
            n_ei: 24,
            prior_weight: 1.0,
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

enum Density {
    Categorical(Vec<f64>),
    Parzen {
        centers: Vec<f64>,
        sigma: f64,
        low: f64,
        high: f64,
        prior: f64,
    },
}

impl Density {
    fn fit(dim: &Dimension, xs: &[f64], prior: f64) -> Self {
        match &dim.kind {
            DimKind::Categorical(choices) => {
                let mut p = vec![prior; choices.len()];
                for &x in xs {
                    p[x as usize] += 1.0;
                }
                let total: f64 = p.iter().sum();
                Density::Categorical(p.into_iter().map(|v| v / total).collect())
            }
            _ => {
                let (low, high) = dim.internal_bounds();
                let width = high - low;
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n.max(1.0);
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                let scott = 1.06 * var.sqrt() * n.max(1.0).powf(-0.2);
                let floor = width / (1.0 + n).min(100.0);
                Density::Parzen {
                    centers: xs.to_vec(),
                    sigma: scott.clamp(floor, width),
                    low,
                    high,
                    prior,
                }
            }
        }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            Density::Categorical(p) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        return i as f64;
                    }
                }
                (p.len() - 1) as f64
            }
            Density::Parzen {
                centers,
                sigma,
                low,
                high,
                prior,
            } => {
                let total = centers.len() as f64 + prior;
                let pick = rng.random::<f64>() * total;
                if pick >= centers.len() as f64 {
                    return rng.random_range(*low..*high);
                }
                let mu = centers[pick as usize];
                for _ in 0..64 {
                    let x = mu + sigma * rng.sample::<f64, _>(StandardNormal);
                    if (*low..*high).contains(&x) {
                        return x;
                    }
                }
                mu.clamp(*low, *high)
            }
        }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        match self {
            Density::Categorical(p) => p[x as usize].ln(),
            Density::Parzen {
                centers,
                sigma,
                low,
                high,
                prior,
            } => {
                let total = centers.len() as f64 + prior;
                let mut pdf = prior / (high - low);
                for &mu in centers {
                    let z = (x - mu) / sigma;
                    let mass = std_normal_cdf((high - mu) / sigma) - std_normal_cdf((low - mu) / sigma);
                    let phi = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                    pdf += phi / mass.max(1e-12);
                }
                (pdf / total).ln()
            }
        }
    }
}

fn internal(dim: &Dimension, v: f64) -> f64 {
    dim.to_internal(v)
}

/// Next point to evaluate given `(point, score)` observations.
pub fn tpe_suggest(history: &[(Point, f64)], space: &SearchSpace, settings: &TpeSettings, rng: &mut Rng) -> Result<Point> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    if history.len() < settings.n_startup.max(2) {
        return Ok(space.sample(rng));
    }
    let mut order: Vec<usize> = (0..history.len()).collect();
    // best first; earlier observation wins ties
    order.sort_by(|&a, &b| history[b].1.total_cmp(&history[a].1).then(a.cmp(&b)));
    let n_good = ((settings.gamma * history.len() as f64).ceil() as usize).clamp(1, history.len() - 1);
    let (good, bad) = order.split_at(n_good);

    let mut densities = Vec::with_capacity(space.len());
    for (d, dim) in space.dims().iter().enumerate() {
        let xs = |idx: &[usize]| idx.iter().map(|&i| internal(dim, history[i].0[d])).collect::<Vec<f64>>();
        densities.push((
            Density::fit(dim, &xs(good), settings.prior_weight),
            Density::fit(dim, &xs(bad), settings.prior_weight),
        ));
    }

    let mut best: Option<(f64, Point)> = None;
    for _ in 0..settings.n_ei.max(1) {
        let mut point = Vec::with_capacity(space.len());
        let mut score = 0.0;
        for (dim, (l, g)) in space.dims().iter().zip(&densities) {
            let v = dim.from_internal(l.sample(rng));
            let x = internal(dim, v);
            score += l.log_pdf(x) - g.log_pdf(x);
            point.push(v);
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, point));
        }
    }
    Ok(best.map(|(_, p)| p).expect("at least one candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn unit() -> SearchSpace {
        SearchSpace::new(vec![Dimension {
            name: "x".into(),
            kind: DimKind::Uniform { low: 0.0, high: 1.0 },
        }])
        .unwrap()
    }

    #[test]
    fn startup_is_uniform_and_in_bounds() {
        let space = SearchSpace::pipeline();
        let mut rng = rng_from(3);
        for _ in 0..50 {
            assert!(space.contains(&tpe_suggest(&[], &space, &TpeSettings::default(), &mut rng).unwrap()));
        }
    }

    #[test]
    fn pure_given_rng() {
        let space = unit();
        let hist: Vec<(Point, f64)> = (0..30).map(|i| (vec![i as f64 / 30.0], (i % 7) as f64)).collect();
        let a = tpe_suggest(&hist, &space, &TpeSettings::default(), &mut rng_from(5)).unwrap();
        let b = tpe_suggest(&hist, &space, &TpeSettings::default(), &mut rng_from(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_parzen_integrates_to_one() {
        let dim = Dimension {
            name: "x".into(),
            kind: DimKind::Uniform { low: -1.0, high: 2.0 },
        };
        let d = Density::fit(&dim, &[-0.9, 0.1, 1.95], 1.0);
        let n = 30_000;
        let h = 3.0 / n as f64;
        let integral: f64 = (0..n).map(|i| d.log_pdf(-1.0 + (i as f64 + 0.5) * h).exp() * h).sum();
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }
}
