//! Cost matrices, dataset meta-features and synthetic meta-datasets.

mod cost_matrix;
mod meta_features;
mod synthetic;

use std::path::Path;

use ndarray::Array2;

pub use cost_matrix::{cost_from_alc, load_cost_matrix, save_cost_matrix, sparsify, CostMatrix};
pub use meta_features::{
    featurize, load_meta_features, read_meta_features, save_meta_features, write_meta_features,
    DatasetMetaFeatures, FeatureStats, META_FEATURE_DIM, VARYING_RESOLUTION,
};
pub use synthetic::{
    generate_synthetic, generate_synthetic_with_truth, LatentModel, SyntheticMetaDataset, SyntheticSpec,
};

use crate::error::{Error, Result};
use crate::pipeline_space::{load_pipelines, save_pipelines, PipelineEntry, SearchSpace};

pub const COSTS_FILE: &str = "costs.csv";
pub const META_FEATURES_FILE: &str = "meta_features.csv";
pub const PIPELINES_FILE: &str = "pipelines.json";

/// A cost matrix together with the meta-features of its rows and the
/// encoded pipelines of its columns, aligned by index.
#[derive(Debug, Clone)]
pub struct MetaDataset {
    pub costs: CostMatrix,
    /// `meta[i]` describes `costs` row `i`.
    pub meta: Vec<DatasetMetaFeatures>,
    /// `pipelines[j]` is `costs` column `j`.
    pub pipelines: Vec<PipelineEntry>,
    /// `pipelines × vector_len` encoding of `pipelines`.
    pub pipeline_vectors: Array2<f64>,
}

impl MetaDataset {
    /// Aligns meta-feature records and pipeline entries to the matrix by id.
    pub fn new(
        costs: CostMatrix,
        meta: Vec<DatasetMetaFeatures>,
        pipelines: Vec<PipelineEntry>,
        space: &SearchSpace,
    ) -> Result<Self> {
        let meta = costs
            .dataset_ids()
            .iter()
            .map(|id| {
                meta.iter()
                    .find(|m| &m.dataset_id == id)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("no meta-features for dataset '{id}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let pipelines = costs
            .pipeline_ids()
            .iter()
            .map(|id| {
                pipelines
                    .iter()
                    .find(|p| &p.id == id)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("no configuration for pipeline '{id}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let pipeline_vectors = encode_pipelines(&pipelines, space)?;
        Ok(Self {
            costs,
            meta,
            pipelines,
            pipeline_vectors,
        })
    }

    pub fn from_synthetic(s: SyntheticMetaDataset, space: &SearchSpace) -> Result<Self> {
        Self::new(s.costs, s.meta, s.pipelines, space)
    }

    pub fn load(
        costs: impl AsRef<Path>,
        meta: impl AsRef<Path>,
        pipelines: impl AsRef<Path>,
        space: &SearchSpace,
    ) -> Result<Self> {
        Self::new(
            load_cost_matrix(costs)?,
            load_meta_features(meta)?,
            load_pipelines(pipelines)?,
            space,
        )
    }

    pub fn load_dir(dir: impl AsRef<Path>, space: &SearchSpace) -> Result<Self> {
        let dir = dir.as_ref();
        Self::load(
            dir.join(COSTS_FILE),
            dir.join(META_FEATURES_FILE),
            dir.join(PIPELINES_FILE),
            space,
        )
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_cost_matrix(&self.costs, dir.join(COSTS_FILE))?;
        save_meta_features(&self.meta, dir.join(META_FEATURES_FILE))?;
        save_pipelines(&self.pipelines, dir.join(PIPELINES_FILE))
    }

    /// Same datasets and pipelines with a different matrix (same ids).
    pub fn with_costs(&self, costs: CostMatrix) -> Result<Self> {
        if costs.dataset_ids() != self.costs.dataset_ids() || costs.pipeline_ids() != self.costs.pipeline_ids() {
            return Err(Error::Validation("replacement matrix ids differ".into()));
        }
        Ok(Self {
            costs,
            ..self.clone()
        })
    }
}

pub fn encode_pipelines(pipelines: &[PipelineEntry], space: &SearchSpace) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((pipelines.len(), space.vector_len()));
    for (mut row, p) in out.rows_mut().into_iter().zip(pipelines) {
        let v = space
            .encode(&p.config)
            .map_err(|e| Error::Validation(format!("pipeline '{}': {e}", p.id)))?;
        row.assign(&ndarray::Array1::from(v));
    }
    Ok(out)
}
