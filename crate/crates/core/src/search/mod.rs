//! Configuration search: a typed space over every switch and hyperparameter,
//! a TPE optimizer, a cross-validation objective and the from-scratch,
//! transfer and oracle strategies.

mod collection;
mod cv;
mod report;
mod space;
mod strategy;
mod tpe;

pub use collection::{collection_build, CollectionEntry, PipelineCollection, Provenance, SourceTask, COLLECTION_SCHEMA};
pub use cv::{cv_folds, cv_objective, fold_task, CvProtocol, Fold, Trial};
pub use report::{search_report, REPORT_SCHEMA};
pub use space::{flatten_config, DimKind, Dimension, Point, SearchSpace};
pub use strategy::{
    run_search, search_from_scratch, search_oracle, search_transfer, test_objective, Progress, SearchOptions, SearchOutcome,
    Strategy,
};
pub use tpe::{tpe_suggest, TpeSettings};
