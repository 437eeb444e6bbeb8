//! Domain similarity from how a pipeline collection ranks on each task.

mod mds;
mod report;

pub use mds::{embed_2d, Embedding};
pub use report::{evaluate_grid, similarity_report, AccuracyGrid, GridTask, SimilarityReport, ANALYSIS_SCHEMA};

use crate::error::{Error, Result};

/// Ranks of every pipeline's accuracy on one task, 1 = best, ties averaged.
#[derive(Clone, Debug, PartialEq)]
pub struct RankProfile {
    pub task_id: String,
    pub ranks: Vec<f64>,
}

pub fn rank_profile(task_id: impl Into<String>, accuracies: &[f64]) -> Result<RankProfile> {
    if accuracies.len() < 2 {
        return Err(Error::shape("rank_profile", "at least 2 pipelines", accuracies.len()));
    }
    if let Some(index) = accuracies.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite { context: "rank_profile", index });
    }
    let mut order: Vec<usize> = (0..accuracies.len()).collect();
    order.sort_by(|&a, &b| accuracies[b].total_cmp(&accuracies[a]));
    let mut ranks = vec![0.0; accuracies.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && accuracies[order[end]] == accuracies[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    Ok(RankProfile {
        task_id: task_id.into(),
        ranks,
    })
}

/// Pearson correlation of two rank vectors.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape("spearman_rho", format!("two vectors of equal length ≥ 2 (left {})", a.len()), b.len()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// `√(1 − ρ)`.
pub fn rank_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(distance_from_rho(spearman_rho(a, b)?))
}

pub fn distance_from_rho(rho: f64) -> f64 {
    (1.0 - rho).max(0.0).sqrt()
}

/// Symmetric, zero-diagonal, non-negative matrix of task distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::shape("DistanceMatrix", n, r.len()));
            }
            values.extend_from_slice(r);
        }
        let m = Self { n, values };
        for i in 0..n {
            if m.get(i, i) != 0.0 {
                return Err(Error::Config(format!("distance diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let d = m.get(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::NonFinite { context: "DistanceMatrix", index: i * n + j });
                }
                if d != m.get(j, i) {
                    return Err(Error::Config(format!("distance matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(m)
    }

    /// Pairwise rank distances between task profiles.
    pub fn from_profiles(profiles: &[RankProfile]) -> Result<Self> {
        let n = profiles.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = rank_distance(&profiles[i].ranks, &profiles[j].ranks)?;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }
}
