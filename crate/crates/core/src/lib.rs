//! Toolkit for eliciting, aggregating, modelling and evaluating scalar
//! subjective-probability judgments on premise/hypothesis pairs.
//!
//! The pieces fit together as a pipeline:
//!
//! - [`scale`] maps raw 10,000-step slider positions to probabilities.
//! - [`elicitation`] builds 5-pair annotation batches, decides when a third
//!   annotator is needed and averages responses into gold scores.
//! - [`qualification`] scores the annotator qualification test.
//! - [`surrogate`] turns categorical labels into scalar pre-training targets.
//! - [`regressor`] trains a sigmoid linear head over feature vectors.
//! - [`metrics`] and [`report`] evaluate predictions and summarise datasets.
//!
//! [`datamodel`] holds the shared types and file formats.

pub mod config;
pub mod datamodel;
pub mod elicitation;
pub mod error;
pub mod metrics;
pub mod qualification;
pub mod regressor;
pub mod report;
pub mod scale;
pub mod surrogate;

pub use datamodel::{AnnotationEvent, CategoricalLabel, Dataset, SentencePair, Split};
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use scale::ScaleParams;
