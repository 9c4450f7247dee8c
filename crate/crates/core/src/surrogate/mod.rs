//! The zero-shot surrogate: a feed-forward scorer over
//! `concat(pipeline vector, meta-feature vector)` whose lowest score marks
//! the predicted-best pipeline.
//!
//! Training minimizes a pairwise ranking loss over triples
//! `(dataset, better, worse)` taken from the cost matrix, or a least-squares
//! loss on costs for comparison. Gradients are computed by hand-written
//! backpropagation and optimized with Adam.

mod network;
mod objective;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use network::SurrogateParams;
pub use objective::{
    batch_loss, build_triples, gradients, least_squares_loss, loss_and_gradients, observed_cells, ranking_loss,
    ranking_loss_literal, sigmoid, softplus, Batch, Cell, Objective, TrainingData, Triple,
};
pub use train::{train, train_with_checkpoints, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::meta_dataset::FeatureStats;

/// A trained surrogate with everything needed to score new datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub params: SurrogateParams,
    pub config: TrainConfig,
    /// Meta-feature standardization fitted on the meta-train datasets.
    pub feature_stats: Option<FeatureStats>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    /// Row-major `out × in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    layer_sizes: Vec<usize>,
    objective: Objective,
    seed: u64,
    layers: Vec<LayerDoc>,
    train_config: TrainConfig,
    feature_stats: Option<FeatureStats>,
}

impl SurrogateModel {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let doc = ModelDoc {
            layer_sizes: p.sizes().to_vec(),
            objective: self.config.objective,
            seed: self.config.seed,
            layers: (0..p.n_layers())
                .map(|l| LayerDoc {
                    weights: p.weights(l).iter().copied().collect(),
                    bias: p.bias(l).to_vec(),
                })
                .collect(),
            train_config: self.config.clone(),
            feature_stats: self.feature_stats.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(s)?;
        if doc.layers.len() + 1 != doc.layer_sizes.len() {
            return Err(Error::Validation("layer count does not match layer sizes".into()));
        }
        let flat: Vec<f64> = doc
            .layers
            .into_iter()
            .flat_map(|l| l.weights.into_iter().chain(l.bias))
            .collect();
        let params = SurrogateParams::from_flat(doc.layer_sizes, flat)?;
        let mut config = doc.train_config;
        config.objective = doc.objective;
        config.seed = doc.seed;
        Ok(Self {
            params,
            config,
            feature_stats: doc.feature_stats,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = self.to_json()?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
