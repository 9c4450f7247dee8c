use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use zap_core::evaluation::EvalConfig;
use zap_core::meta_dataset::{MetaDataset, COSTS_FILE, META_FEATURES_FILE, PIPELINES_FILE};
use zap_core::pipeline_space::default_space;
use zap_core::selector::{Method, DEFAULT_K};
use zap_core::surrogate::{Objective, TrainConfig};

/// Flat JSON run manifest. Unset paths fall back to the output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub costs: Option<PathBuf>,
    pub meta_features: Option<PathBuf>,
    pub pipelines: Option<PathBuf>,
    #[serde(flatten)]
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub methods: Vec<String>,
    pub fractions: Vec<f64>,
    pub inner_cv_folds: Option<usize>,
    pub knn_k: usize,
    pub budget: f64,
    pub t0: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            costs: None,
            meta_features: None,
            pipelines: None,
            train: TrainConfig::default(),
            seeds: Vec::new(),
            methods: Method::ALL.iter().map(|m| m.as_str().to_string()).collect(),
            fractions: Vec::new(),
            inner_cv_folds: None,
            knn_k: DEFAULT_K,
            budget: 1200.0,
            t0: 60.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn load_metadataset(&self, out: &Path) -> Result<MetaDataset> {
        let dir = self.data_dir.clone().unwrap_or_else(|| out.to_path_buf());
        let pick = |p: &Option<PathBuf>, name: &str| p.clone().unwrap_or_else(|| dir.join(name));
        Ok(MetaDataset::load(
            pick(&self.costs, COSTS_FILE),
            pick(&self.meta_features, META_FEATURES_FILE),
            pick(&self.pipelines, PIPELINES_FILE),
            &default_space(),
        )?)
    }

    pub fn eval_config(&self, jobs: usize) -> EvalConfig {
        EvalConfig {
            train: self.train.clone(),
            knn_k: self.knn_k,
            inner_cv_folds: self.inner_cv_folds,
            jobs,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataPaths {
    /// Directory holding costs.csv, meta_features.csv and pipelines.json
    /// (defaults to the output directory).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long)]
    pub meta_features: Option<PathBuf>,
    #[arg(long)]
    pub pipelines: Option<PathBuf>,
}

impl DataPaths {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.data.is_some() {
            cfg.data_dir = self.data.clone();
        }
        for (flag, slot) in [
            (&self.costs, &mut cfg.costs),
            (&self.meta_features, &mut cfg.meta_features),
            (&self.pipelines, &mut cfg.pipelines),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainOverrides {
    /// ranking_bounded, ranking_literal or least_squares.
    #[arg(long, value_parser = parse_objective)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: zap_core::Error| e.to_string())
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(o) = self.objective {
            cfg.objective = o;
        }
        if let Some(s) = self.steps {
            cfg.steps = s;
        }
        if let Some(h) = &self.hidden {
            cfg.hidden = h.clone();
        }
        if let Some(l) = self.learning_rate {
            cfg.learning_rate = l;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(w) = self.weight_decay {
            cfg.weight_decay = w;
        }
        cfg.validate()?;
        Ok(())
    }
}
