//! Desk-scale experiment substrate: synthetic domains, CSV datasets, episode
//! sampling, source pretraining and evaluation.

mod csvio;
mod domain;
mod episode;
mod suite;

pub use csvio::{export_csv, ingest_csv, read_csv, write_csv};
pub use domain::{gen_domain, givens_rotation, ClassLayout, DomainShiftSpec};
pub use episode::{sample_episode, Episode, EpisodeSpec};
pub use suite::{
    default_suite, pretrain_source, run_benchmark, Approach, BenchCell, BenchResult, BenchSuite, DomainEntry, MapWinner, PretrainSpec,
    BENCH_SCHEMA,
};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Real};
use crate::Model;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    pub features: Matrix<f32>,
    pub labels: Vec<usize>,
    pub class_names: Option<Vec<String>>,
    pub domain_tag: String,
}

impl EmbeddingDataset {
    pub fn new(features: Matrix<f32>, labels: Vec<usize>, class_names: Option<Vec<String>>, domain_tag: impl Into<String>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape("dataset labels", features.rows(), labels.len()));
        }
        if let Some(names) = &class_names {
            if let Some(&bad) = labels.iter().find(|&&y| y >= names.len()) {
                return Err(Error::InvalidTask(format!("label {bad} has no class name")));
            }
        }
        Ok(Self {
            features,
            labels,
            class_names,
            domain_tag: domain_tag.into(),
        })
    }

    pub fn num_classes(&self) -> usize {
        match &self.class_names {
            Some(n) => n.len(),
            None => self.labels.iter().max().map_or(0, |m| m + 1),
        }
    }

    /// Row indices of each class, in row order.
    pub fn class_rows(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }
}

/// Fraction of rows whose top-scoring class (lowest id on ties) matches the label.
pub fn evaluate<T: Real>(model: &Model<T>, x: &Matrix<T>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidTask("empty test set".into()));
    }
    if x.rows() != labels.len() {
        return Err(Error::shape("test labels", x.rows(), labels.len()));
    }
    let pred = model.predict(x)?.argmax_rows();
    let correct = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dense, Head};

    fn constant_model(classes: usize) -> Model<f64> {
        let head = Head::Linear(Dense::new(Matrix::zeros(2, classes), vec![0.0; classes]).unwrap());
        Model::new(2, vec![], None, head).unwrap()
    }

    #[test]
    fn constant_prediction_on_balanced_four_way() {
        let x = Matrix::<f64>::zeros(8, 2);
        let y = vec![0, 1, 2, 3, 0, 1, 2, 3];
        assert_eq!(evaluate(&constant_model(4), &x, &y).unwrap(), 0.25);
    }

    #[test]
    fn identity_model_all_correct() {
        let head = Head::Linear(Dense::new(Matrix::eye(2), vec![0.0; 2]).unwrap());
        let m = Model::new(2, vec![], None, head).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(evaluate(&m, &x, &[0, 1]).unwrap(), 1.0);
        assert!(evaluate(&m, &Matrix::zeros(0, 2), &[]).is_err());
    }
}
