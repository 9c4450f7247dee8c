//! Zero-shot selection of deep-learning pipelines.
//!
//! The crate meta-trains a ranking surrogate on a (datasets × pipelines) matrix
//! of anytime learning-curve scores, picks a pipeline for an unseen dataset from
//! its meta-features alone, and evaluates the procedure with a
//! leave-one-group-out protocol.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`meta_dataset`] | cost matrix, meta-features, sparsification, synthetic generator |
//! | [`pipeline_space`] | the 26-hyperparameter pipeline space and its vector encoding |
//! | [`surrogate`] | feed-forward scorer, ranking / least-squares objectives, training |
//! | [`selector`] | zero-shot selection and the baselines |
//! | [`alc`] | NAUC, log-time transform, area under the learning curve |
//! | [`evaluation`] | folds, inner CV, regret, ranks, Wilcoxon-Holm, sparsity sweep |

pub mod alc;
pub mod error;
pub mod evaluation;
pub mod meta_dataset;
pub mod pipeline_space;
pub mod rng;
pub mod selector;
pub mod surrogate;

pub use error::{Error, Result};
