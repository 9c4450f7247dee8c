//! Planted low-rank generator for desk-scale meta-datasets.
//!
//! Scores follow `clip(σ(γ·uᵢ·vⱼ + bᵢ + cⱼ) + ε, 0, 1)`. Dataset factors `uᵢ`
//! are a fixed nonlinear map of the dataset's meta-features plus a noise
//! vector shared by its group; pipeline factors `vⱼ` and biases `cⱼ` are
//! random projections of the encoded pipeline vectors. Rows and columns thus
//! show the easy/hard dataset and strong/weak pipeline striping of real
//! cost matrices, and the best pipeline depends on the meta-features.

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CostMatrix, DatasetMetaFeatures, VARYING_RESOLUTION};
use crate::error::{Error, Result};
use crate::pipeline_space::{default_space, PipelineEntry};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_groups: usize,
    pub variants_per_group: usize,
    pub n_pipelines: usize,
    pub latent_rank: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_groups: 20,
            variants_per_group: 5,
            n_pipelines: 100,
            latent_rank: 4,
            noise_std: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_groups", self.n_groups),
            ("variants_per_group", self.variants_per_group),
            ("n_pipelines", self.n_pipelines),
            ("latent_rank", self.latent_rank),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidArgument("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// The planted model behind a generated matrix.
#[derive(Debug, Clone)]
pub struct LatentModel {
    /// `datasets × rank`
    pub dataset_factors: Array2<f64>,
    pub dataset_bias: Array1<f64>,
    /// `pipelines × rank`
    pub pipeline_factors: Array2<f64>,
    pub pipeline_bias: Array1<f64>,
    /// Interaction scale γ.
    pub interaction_scale: f64,
    /// `groups × rank` noise shared by all variants of a group.
    pub group_offsets: Array2<f64>,
    /// Standard deviation of the per-variant factor perturbation.
    pub variant_perturbation_std: f64,
}

impl LatentModel {
    pub fn logit(&self, dataset: usize, pipeline: usize) -> f64 {
        self.interaction_scale * self.dataset_factors.row(dataset).dot(&self.pipeline_factors.row(pipeline))
            + self.dataset_bias[dataset]
            + self.pipeline_bias[pipeline]
    }

    pub fn noiseless_alc(&self, dataset: usize, pipeline: usize) -> f64 {
        sigmoid(self.logit(dataset, pipeline))
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMetaDataset {
    pub costs: CostMatrix,
    pub meta: Vec<DatasetMetaFeatures>,
    pub pipelines: Vec<PipelineEntry>,
    pub latent: LatentModel,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// (resolution, weight) following the resolution mix of common image benchmarks
const RESOLUTIONS: [(i64, f64); 10] = [
    (28, 90.0),
    (32, 105.0),
    (64, 15.0),
    (105, 15.0),
    (128, 15.0),
    (150, 15.0),
    (256, 90.0),
    (300, 30.0),
    (600, 15.0),
    (VARYING_RESOLUTION, 135.0),
];

// fixed (not data-dependent) centering of the raw meta-features
const FEATURE_CENTER: [f64; 5] = [8.0, 2.0, 4.5, 0.25, 2.5];
const FEATURE_SCALE: [f64; 5] = [2.0, 1.0, 1.5, 0.45, 1.2];

const FACTOR_AMPLITUDE: f64 = 1.5;
const MIXING_STD: f64 = 0.6;
const GROUP_NOISE_STD: f64 = 0.3;
const VARIANT_NOISE_STD: f64 = 0.05;
const INTERACTION: f64 = 1.2;
const PIPELINE_BIAS_STD: f64 = 0.4;
const GROUP_BIAS_STD: f64 = 0.5;

fn log_uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn weighted_resolution(rng: &mut Rng) -> i64 {
    let total: f64 = RESOLUTIONS.iter().map(|r| r.1).sum();
    let mut x = rng.random::<f64>() * total;
    for (res, w) in RESOLUTIONS {
        if x < w {
            return res;
        }
        x -= w;
    }
    RESOLUTIONS[RESOLUTIONS.len() - 1].0
}

/// Standardizes each column to zero mean and unit population std.
fn standardize_columns(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let std = (col.mapv(|v| (v - mean).powi(2)).sum() / n).sqrt();
        let std = if std > 1e-12 { std } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / std);
    }
}

fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
}

pub fn generate_synthetic_with_truth(spec: &SyntheticSpec) -> Result<SyntheticMetaDataset> {
    spec.validate()?;
    let space = default_space();
    let rank = spec.latent_rank;
    let mut rng = rng_from_seed(spec.seed);

    let pipelines: Vec<PipelineEntry> = (0..spec.n_pipelines)
        .map(|j| PipelineEntry {
            id: format!("p{j:03}"),
            config: space.sample(derive_seed(spec.seed, &[1, j as u64])),
        })
        .collect();
    let width = space.vector_len();
    let mut vectors = Array2::zeros((spec.n_pipelines, width));
    for (mut row, p) in vectors.rows_mut().into_iter().zip(&pipelines) {
        row.assign(&Array1::from(space.encode(&p.config)?));
    }
    let mean = vectors.mean_axis(ndarray::Axis(0)).expect("at least one pipeline");
    let centered = &vectors - &mean;

    let projection = gaussian_matrix(&mut rng, width, rank, 1.0);
    let mut pipeline_factors = centered.dot(&projection);
    standardize_columns(&mut pipeline_factors);
    let bias_projection = gaussian_matrix(&mut rng, width, 1, 1.0);
    let mut pipeline_bias = centered.dot(&bias_projection);
    standardize_columns(&mut pipeline_bias);
    let pipeline_bias = pipeline_bias.column(0).mapv(|v| v * PIPELINE_BIAS_STD);

    let mixing = gaussian_matrix(&mut rng, rank, 5, MIXING_STD);
    let classes_weight = -0.3;
    let group_offsets = gaussian_matrix(&mut rng, spec.n_groups, rank, GROUP_NOISE_STD);
    let group_bias_dist = Normal::new(0.3, GROUP_BIAS_STD).expect("finite std");
    let variant_dist = Normal::new(0.0, VARIANT_NOISE_STD).expect("finite std");

    let n_datasets = spec.n_groups * spec.variants_per_group;
    let mut meta = Vec::with_capacity(n_datasets);
    let mut dataset_factors = Array2::zeros((n_datasets, rank));
    let mut dataset_bias = Array1::zeros(n_datasets);
    for g in 0..spec.n_groups {
        let channels = if rng.random::<f64>() < 0.2 { 1 } else { 3 };
        let resolution = weighted_resolution(&mut rng);
        let group_bias = group_bias_dist.sample(&mut rng);
        for v in 0..spec.variants_per_group {
            let i = g * spec.variants_per_group + v;
            let n_classes = log_uniform(&mut rng, 2.0, 100.0).round() as u32;
            let per_class = log_uniform(&mut rng, 20.0, 2000.0).round() as u64;
            let mf = DatasetMetaFeatures {
                dataset_id: format!("g{g:02}_v{v:02}"),
                n_train_images: per_class * u64::from(n_classes),
                n_channels: channels,
                resolution,
                n_classes,
                group_id: Some(format!("g{g:02}")),
            };
            let raw = mf.raw_features();
            let z = Array1::from_iter((0..5).map(|k| (raw[k] - FEATURE_CENTER[k]) / FEATURE_SCALE[k]));
            let base = mixing.dot(&z).mapv(|a| FACTOR_AMPLITUDE * a.tanh());
            for k in 0..rank {
                dataset_factors[[i, k]] = base[k] + group_offsets[[g, k]] + variant_dist.sample(&mut rng);
            }
            dataset_bias[i] = group_bias + classes_weight * z[4] + variant_dist.sample(&mut rng);
            meta.push(mf);
        }
    }

    let latent = LatentModel {
        dataset_factors,
        dataset_bias,
        pipeline_factors,
        pipeline_bias,
        interaction_scale: INTERACTION / (rank as f64).sqrt(),
        group_offsets,
        variant_perturbation_std: VARIANT_NOISE_STD,
    };

    let noise = Normal::new(0.0, spec.noise_std).expect("finite std");
    let mut values = Array2::zeros((n_datasets, spec.n_pipelines));
    for ((d, p), cell) in values.indexed_iter_mut() {
        let eps = if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        *cell = (latent.noiseless_alc(d, p) + eps).clamp(0.0, 1.0);
    }
    let costs = CostMatrix::dense(
        meta.iter().map(|m| m.dataset_id.clone()).collect(),
        pipelines.iter().map(|p| p.id.clone()).collect(),
        values,
    )?;
    Ok(SyntheticMetaDataset {
        costs,
        meta,
        pipelines,
        latent,
    })
}

pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(CostMatrix, Vec<DatasetMetaFeatures>, Vec<PipelineEntry>)> {
    let s = generate_synthetic_with_truth(spec)?;
    Ok((s.costs, s.meta, s.pipelines))
}
