//! Scalar predictor: a sigmoid-activated linear head over pair feature
//! vectors, trained with Adam under gradient-norm clipping.
//!
//! Feature vectors come from an external encoder via [`FeatureTable`] files,
//! or from the hashed bag-of-words [`toy_featurize`] for desk-scale work.

mod features;
mod head;
mod train;

pub use features::{toy_featurize, FeatureMode, FeatureTable};
pub use head::{AdamConfig, AdamState, Gradient, Loss, RegressionHead};
pub use train::{
    evaluate, init_head, predict_pairs, pretrain_finetune, train, EpochReport, PretrainOutcome,
    TrainConfig, TrainOutcome,
};
