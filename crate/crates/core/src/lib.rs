//! Modular adaptation pipelines for cross-domain few-shot classification.
//!
//! A pretrained dense classifier is adapted to a target task by a fixed
//! sequence of switchable operators (batch-norm re-estimation, transductive
//! prototypes, finetuning and four semi-supervised variants). Pipeline
//! configurations are searched with a Tree-structured Parzen Estimator under
//! cross-validation, transferred from a persisted collection, and compared
//! across domains through rank correlations of their accuracies.

pub mod analysis;
pub mod bench;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod ops;
pub mod pipeline;
pub mod rng;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{Model, ModelTemplate};
pub use tensor::{Matrix, Real};
