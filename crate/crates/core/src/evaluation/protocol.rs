use std::cell::Cell;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::FoldSpec;
use super::report::{DatasetOutcome, EvalReport, TaskRecord};
use crate::error::{Error, Result};
use crate::meta_dataset::{featurize, sparsify, CostMatrix, DatasetMetaFeatures, FeatureStats, MetaDataset};
use crate::rng::{derive_seed, rng_from_seed};
use crate::selector::{argmin, select_knn, select_random, select_single_best, select_zero_shot, Method, DEFAULT_K};
use crate::surrogate::{train, train_with_checkpoints, SurrogateParams, TrainConfig, TrainingData};

const TAG_TRAIN: u64 = 1;
const TAG_SPARSE: u64 = 2;
const TAG_RANDOM: u64 = 3;
const TAG_INNER: u64 = 4;

pub const N_CHECKPOINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Surrogate settings; the seed is replaced per (seed, fold).
    pub train: TrainConfig,
    pub knn_k: usize,
    /// Inner cross-validation folds for choosing the step budget; `None` trains for `train.steps`.
    pub inner_cv_folds: Option<usize>,
    /// Worker threads for (fold, seed) tasks.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            knn_k: DEFAULT_K,
            inner_cv_folds: None,
            jobs: 1,
        }
    }
}

/// Mediates every cost-matrix read for one task. Reads of test rows before
/// [`FoldAccess::begin_scoring`] are counted as leakage.
pub struct FoldAccess<'a> {
    costs: &'a CostMatrix,
    is_test: Vec<bool>,
    scoring: Cell<bool>,
    test_reads_during_fit: Cell<u64>,
}

impl<'a> FoldAccess<'a> {
    pub fn new(costs: &'a CostMatrix, test: &[usize]) -> Self {
        let mut is_test = vec![false; costs.n_datasets()];
        for &t in test {
            is_test[t] = true;
        }
        Self {
            costs,
            is_test,
            scoring: Cell::new(false),
            test_reads_during_fit: Cell::new(0),
        }
    }

    fn cell(&self, d: usize, p: usize) -> Option<f64> {
        if self.is_test[d] && !self.scoring.get() {
            self.test_reads_during_fit.set(self.test_reads_during_fit.get() + 1);
        }
        self.costs.get(d, p)
    }

    pub fn row(&self, d: usize) -> Vec<Option<f64>> {
        (0..self.costs.n_pipelines()).map(|p| self.cell(d, p)).collect()
    }

    /// Sub-matrix of `rows`, read cell by cell.
    pub fn matrix(&self, rows: &[usize]) -> Result<CostMatrix> {
        CostMatrix::new(
            rows.iter().map(|&d| self.costs.dataset_ids()[d].clone()).collect(),
            self.costs.pipeline_ids().to_vec(),
            rows.iter().map(|&d| self.row(d)).collect(),
        )
    }

    pub fn begin_scoring(&self) {
        self.scoring.set(true);
    }

    pub fn test_reads_during_fit(&self) -> u64 {
        self.test_reads_during_fit.get()
    }
}

/// Best observed ALC in `row` minus the ALC at `chosen`.
pub fn regret(chosen: usize, row: &[Option<f64>]) -> Result<f64> {
    let got = row
        .get(chosen)
        .copied()
        .flatten()
        .ok_or_else(|| Error::InvalidArgument(format!("chosen pipeline {chosen} is not observed")))?;
    let best = row.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(best - got)
}

/// Index of the smallest score among observed cells; ties go to the lowest index.
pub fn choose_observed(scores: &[f64], row: &[Option<f64>]) -> Option<usize> {
    let observed: Vec<usize> = (0..row.len()).filter(|&p| row[p].is_some()).collect();
    let sub: Vec<f64> = observed.iter().map(|&p| scores[p]).collect();
    argmin(&sub).map(|i| observed[i])
}

/// `N_CHECKPOINTS` evenly spaced step counts ending at `steps`.
pub fn checkpoint_grid(steps: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=N_CHECKPOINTS)
        .map(|k| ((k * steps) as f64 / N_CHECKPOINTS as f64).round().max(1.0) as usize)
        .collect();
    grid.dedup();
    grid
}

fn surrogate_choice(p: &SurrogateParams, meta_vec: &[f64], data: &TrainingData, row: &[Option<f64>]) -> Result<usize> {
    let r = select_zero_shot(p, meta_vec, data.pipeline_vectors.view())?;
    choose_observed(&r.scores, row).ok_or(Error::Empty("observed cells in dataset row"))
}

/// Chooses a step budget by group-respecting `n_folds`-fold cross-validation
/// over the meta-train datasets. Returns the checkpoint with the lowest summed
/// validation regret; ties go to the later checkpoint.
pub fn inner_cv_epochs(data: &TrainingData, groups: &[String], cfg: &TrainConfig, n_folds: usize) -> Result<usize> {
    if groups.len() != data.costs.n_datasets() {
        return Err(Error::DimensionMismatch {
            expected: data.costs.n_datasets(),
            found: groups.len(),
        });
    }
    let mut distinct: Vec<&str> = Vec::new();
    for g in groups {
        if !distinct.contains(&g.as_str()) {
            distinct.push(g);
        }
    }
    if n_folds < 2 || distinct.len() < n_folds {
        return Err(Error::InvalidArgument(format!(
            "inner cross-validation needs 2 <= folds <= groups, got {n_folds} folds and {} groups",
            distinct.len()
        )));
    }
    let fold_of: Vec<usize> = groups
        .iter()
        .map(|g| distinct.iter().position(|d| d == g).expect("group listed") % n_folds)
        .collect();
    let grid = checkpoint_grid(cfg.steps);
    let mut total = vec![0.0; grid.len()];
    for f in 0..n_folds {
        let (val, fit): (Vec<usize>, Vec<usize>) = (0..groups.len()).partition(|&d| fold_of[d] == f);
        let sub = TrainingData::new(
            data.costs.select_datasets(&fit),
            data.meta_vectors.select(ndarray::Axis(0), &fit),
            data.pipeline_vectors.clone(),
        )?;
        let fold_cfg = TrainConfig {
            seed: derive_seed(cfg.seed, &[TAG_INNER, f as u64]),
            ..cfg.clone()
        };
        let rows: Vec<Vec<Option<f64>>> = val
            .iter()
            .map(|&d| (0..data.costs.n_pipelines()).map(|p| data.costs.get(d, p)).collect())
            .collect();
        let mut slot = 0;
        train_with_checkpoints(&sub, &fold_cfg, &grid, |_, params| {
            for (&d, row) in val.iter().zip(&rows) {
                let meta = data.meta_vectors.row(d).to_vec();
                total[slot] += regret(surrogate_choice(params, &meta, data, row)?, row)?;
            }
            slot += 1;
            Ok(())
        })?;
    }
    let mut best = 0;
    for (i, &v) in total.iter().enumerate() {
        if v <= total[best] {
            best = i;
        }
    }
    Ok(grid[best])
}

/// Replaces each dataset's ALC values `a` by `a^γ` with `γ` drawn
/// log-uniformly from `[1/5, 5]` per dataset. Within-row orderings are kept.
pub fn monotone_distortion(m: &CostMatrix, seed: u64) -> Result<CostMatrix> {
    let mut rng = rng_from_seed(seed);
    let bound = 5f64.ln();
    let gammas: Vec<f64> = (0..m.n_datasets()).map(|_| rng.random_range(-bound..=bound).exp()).collect();
    m.map_observed(|d, a| a.powf(gammas[d]))
}

#[derive(Debug, Clone, Copy)]
enum Selector {
    Method(Method),
    Oracle,
}

impl Selector {
    fn label(self) -> &'static str {
        match self {
            Selector::Method(m) => m.as_str(),
            Selector::Oracle => "oracle",
        }
    }
}

enum Fitted {
    Surrogate { params: SurrogateParams, stats: FeatureStats },
    Knn { costs: CostMatrix, meta_vectors: ndarray::Array2<f64>, stats: FeatureStats },
    Scores(Vec<f64>),
    Random,
    Oracle,
}

fn train_meta(md: &MetaDataset, fold: &FoldSpec) -> Result<(Vec<DatasetMetaFeatures>, FeatureStats)> {
    let meta: Vec<DatasetMetaFeatures> = fold.train.iter().map(|&i| md.meta[i].clone()).collect();
    let stats = FeatureStats::fit(&meta)?;
    Ok((meta, stats))
}

#[allow(clippy::too_many_arguments)]
fn run_task(
    md: &MetaDataset,
    fold: &FoldSpec,
    fold_idx: usize,
    seed: u64,
    selector: Selector,
    cfg: &EvalConfig,
    fraction: Option<f64>,
) -> Result<TaskRecord> {
    let access = FoldAccess::new(&md.costs, &fold.test);
    let mut train_cells = 0;
    let mut fit_costs = || -> Result<CostMatrix> {
        let m = access.matrix(&fold.train)?;
        let m = match fraction {
            Some(f) => sparsify(&m, f, derive_seed(seed, &[TAG_SPARSE, f.to_bits(), fold_idx as u64]))?,
            None => m,
        };
        train_cells = m.observed_count();
        Ok(m)
    };
    let fitted = match selector {
        Selector::Method(Method::ZapHpo) => {
            let costs = fit_costs()?;
            let (meta, stats) = train_meta(md, fold)?;
            let data = TrainingData::new(costs, stats.transform_all(&meta), md.pipeline_vectors.clone())?;
            let mut tcfg = TrainConfig {
                seed: derive_seed(seed, &[TAG_TRAIN, fold_idx as u64]),
                ..cfg.train.clone()
            };
            if let Some(k) = cfg.inner_cv_folds {
                let groups: Vec<String> = meta
                    .iter()
                    .map(|m| m.group_id.clone().unwrap_or_else(|| m.dataset_id.clone()))
                    .collect();
                tcfg.steps = inner_cv_epochs(&data, &groups, &tcfg, k)?;
            }
            Fitted::Surrogate {
                params: train(&data, &tcfg)?.params,
                stats,
            }
        }
        Selector::Method(Method::ZapAsKnn) => {
            let costs = fit_costs()?;
            let (meta, stats) = train_meta(md, fold)?;
            Fitted::Knn {
                costs,
                meta_vectors: stats.transform_all(&meta),
                stats,
            }
        }
        Selector::Method(Method::SingleBest) => Fitted::Scores(select_single_best(&fit_costs()?)?.scores),
        Selector::Method(Method::Random) => Fitted::Random,
        Selector::Oracle => Fitted::Oracle,
    };
    let test_reads_during_fit = access.test_reads_during_fit();
    access.begin_scoring();

    let mut outcomes = Vec::with_capacity(fold.test.len());
    for &d in &fold.test {
        let row = access.row(d);
        let chosen = match &fitted {
            Fitted::Surrogate { params, stats } => {
                let q = featurize(&md.meta[d], stats);
                let r = select_zero_shot(params, &q, md.pipeline_vectors.view())?;
                choose_observed(&r.scores, &row)
            }
            Fitted::Knn {
                costs,
                meta_vectors,
                stats,
            } => {
                let q = featurize(&md.meta[d], stats);
                let k = cfg.knn_k.min(costs.n_datasets());
                let r = select_knn(costs, meta_vectors.view(), &q, k)?;
                choose_observed(&r.scores, &row)
            }
            Fitted::Scores(s) => choose_observed(s, &row),
            Fitted::Random => {
                let observed: Vec<usize> = (0..row.len()).filter(|&p| row[p].is_some()).collect();
                if observed.is_empty() {
                    None
                } else {
                    let s = derive_seed(seed, &[TAG_RANDOM, fold_idx as u64, d as u64]);
                    Some(observed[select_random(observed.len(), s)?.chosen])
                }
            }
            Fitted::Oracle => {
                let neg: Vec<f64> = row.iter().map(|v| -v.unwrap_or(f64::NEG_INFINITY)).collect();
                choose_observed(&neg, &row)
            }
        }
        .ok_or_else(|| Error::Validation(format!("test dataset '{}' has no observed cells", md.costs.dataset_ids()[d])))?;
        let alc = row[chosen].expect("chosen among observed");
        let r = regret(chosen, &row)?;
        outcomes.push(DatasetOutcome {
            dataset: md.costs.dataset_ids()[d].clone(),
            chosen: md.costs.pipeline_ids()[chosen].clone(),
            chosen_index: chosen,
            alc,
            oracle_alc: alc + r,
            regret: r,
        });
    }
    Ok(TaskRecord {
        fold: fold_idx,
        group: fold.group.clone(),
        seed,
        train_cells,
        test_reads_during_fit,
        outcomes,
    })
}

fn run_all(
    md: &MetaDataset,
    folds: &[FoldSpec],
    seeds: &[u64],
    selector: Selector,
    cfg: &EvalConfig,
    fraction: Option<f64>,
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    if folds.is_empty() {
        return Err(Error::Empty("fold list"));
    }
    let tasks: Vec<(usize, u64)> = (0..folds.len())
        .flat_map(|f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    let one = |&(f, s): &(usize, u64)| {
        run_task(md, &folds[f], f, s, selector, cfg, fraction).map_err(|e| Error::Task {
            group: folds[f].group.clone(),
            seed: s,
            source: Box::new(e),
        })
    };
    let records = if cfg.jobs <= 1 {
        tasks.iter().map(one).collect::<Result<Vec<_>>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| tasks.par_iter().map(one).collect::<Result<Vec<_>>>())?
    };
    Ok(EvalReport {
        method: selector.label().to_string(),
        records,
    })
}

/// Runs one selection method over every fold and seed. Fitting only sees the
/// fold's meta-train rows; each test dataset is scored on its held-out row.
pub fn evaluate_method(
    method: Method,
    md: &MetaDataset,
    folds: &[FoldSpec],
    seeds: &[u64],
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    run_all(md, folds, seeds, Selector::Method(method), cfg, None)
}

/// Diagnostic selector that reads the test row and picks its best cell.
pub fn evaluate_oracle(md: &MetaDataset, folds: &[FoldSpec], seeds: &[u64], cfg: &EvalConfig) -> Result<EvalReport> {
    run_all(md, folds, seeds, Selector::Oracle, cfg, None)
}

/// The surrogate retrained on randomly thinned meta-train matrices, one
/// report per keep fraction.
pub fn sparsity_sweep(
    md: &MetaDataset,
    fractions: &[f64],
    folds: &[FoldSpec],
    seeds: &[u64],
    cfg: &EvalConfig,
) -> Result<Vec<(f64, EvalReport)>> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidArgument(format!("fraction {f} must lie in (0,1]")));
    }
    fractions
        .iter()
        .map(|&f| Ok((f, run_all(md, folds, seeds, Selector::Method(Method::ZapHpo), cfg, Some(f))?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::make_logo_folds;
    use crate::meta_dataset::{generate_synthetic_with_truth, SyntheticSpec};
    use crate::pipeline_space::default_space;
    use crate::surrogate::build_triples;

    fn small(noise_std: f64) -> MetaDataset {
        let spec = SyntheticSpec {
            n_groups: 5,
            variants_per_group: 3,
            n_pipelines: 20,
            latent_rank: 2,
            noise_std,
            seed: 1,
        };
        MetaDataset::from_synthetic(generate_synthetic_with_truth(&spec).unwrap(), &default_space()).unwrap()
    }

    fn quick() -> EvalConfig {
        EvalConfig {
            train: TrainConfig {
                hidden: vec![16, 16],
                steps: 200,
                batch_size: 32,
                ..TrainConfig::default()
            },
            ..EvalConfig::default()
        }
    }

    #[test]
    fn regret_examples() {
        let row = [Some(0.9), Some(0.4)];
        assert_eq!(regret(0, &row).unwrap(), 0.0);
        assert!((regret(1, &row).unwrap() - 0.5).abs() < 1e-15);
        let shifted = [Some(0.95), Some(0.45)];
        assert!((regret(1, &shifted).unwrap() - 0.5).abs() < 1e-12);
        assert!(regret(1, &[Some(0.9), None]).is_err());
    }

    #[test]
    fn choose_observed_skips_missing() {
        assert_eq!(choose_observed(&[0.1, 0.5, 0.2], &[None, Some(0.1), Some(0.3)]), Some(2));
        assert_eq!(choose_observed(&[0.1], &[None]), None);
    }

    #[test]
    fn fold_access_counts_test_reads() {
        let m = CostMatrix::from_dense_rows(&[vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]]).unwrap();
        let access = FoldAccess::new(&m, &[2]);
        let train = access.matrix(&[0, 1]).unwrap();
        assert_eq!(train.n_datasets(), 2);
        assert_eq!(access.test_reads_during_fit(), 0);
        access.row(2);
        assert_eq!(access.test_reads_during_fit(), 2);
        access.begin_scoring();
        access.row(2);
        assert_eq!(access.test_reads_during_fit(), 2);
    }

    #[test]
    fn checkpoint_grid_shape() {
        let g = checkpoint_grid(1000);
        assert_eq!(g.len(), N_CHECKPOINTS);
        assert_eq!(g[0], 50);
        assert_eq!(*g.last().unwrap(), 1000);
        assert_eq!(checkpoint_grid(3), vec![1, 2, 3]);
    }

    #[test]
    fn oracle_has_zero_regret() {
        let md = small(0.05);
        let folds = make_logo_folds(&md.meta).unwrap();
        let r = evaluate_oracle(&md, &folds, &[0, 1], &quick()).unwrap();
        assert!(r.outcomes().all(|o| o.regret == 0.0));
        assert_eq!(r.outcomes().count(), 30);
    }

    #[test]
    fn random_is_reproducible() {
        let md = small(0.05);
        let folds = make_logo_folds(&md.meta).unwrap();
        let a = evaluate_method(Method::Random, &md, &folds, &[3, 4], &quick()).unwrap();
        let b = evaluate_method(Method::Random, &md, &folds, &[3, 4], &quick()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_matches_serial() {
        let md = small(0.05);
        let folds = make_logo_folds(&md.meta).unwrap();
        let serial = evaluate_method(Method::ZapHpo, &md, &folds, &[0, 1], &quick()).unwrap();
        let cfg = EvalConfig { jobs: 3, ..quick() };
        let parallel = evaluate_method(Method::ZapHpo, &md, &folds, &[0, 1], &cfg).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn surrogate_beats_random_on_noiseless_data() {
        let md = small(0.0);
        let folds = make_logo_folds(&md.meta).unwrap();
        let seeds = [0, 1, 2];
        let zap = evaluate_method(Method::ZapHpo, &md, &folds, &seeds, &quick()).unwrap();
        let random = evaluate_method(Method::Random, &md, &folds, &seeds, &quick()).unwrap();
        assert!(zap.mean_regret() < random.mean_regret());
        assert_eq!(zap.test_reads_during_fit(), 0);
        assert!(zap.outcomes().all(|o| o.regret >= 0.0 && (o.oracle_alc - o.alc - o.regret).abs() < 1e-12));
    }

    #[test]
    fn full_fraction_reproduces_dense_run() {
        let md = small(0.05);
        let folds = make_logo_folds(&md.meta).unwrap();
        let dense = evaluate_method(Method::ZapHpo, &md, &folds, &[5], &quick()).unwrap();
        let sweep = sparsity_sweep(&md, &[1.0, 0.5], &folds, &[5], &quick()).unwrap();
        assert_eq!(sweep[0].1.records, dense.records);
        for (rec, fold) in sweep[1].1.records.iter().zip(&folds) {
            let observed = fold.train.len() * 20;
            assert_eq!(rec.train_cells, observed / 2);
        }
        assert!(sparsity_sweep(&md, &[0.0], &folds, &[5], &quick()).is_err());
    }

    #[test]
    fn triple_counts_shrink_with_fraction() {
        let md = small(0.05);
        let mut prev = usize::MAX;
        for f in [1.0, 0.75, 0.5, 0.25] {
            let n = build_triples(&sparsify(&md.costs, f, 9).unwrap()).len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn distortion_keeps_row_orderings() {
        let md = small(0.05);
        let d = monotone_distortion(&md.costs, 4).unwrap();
        assert_eq!(build_triples(&d), build_triples(&md.costs));
        assert_ne!(d, md.costs);
    }

    fn planted_data() -> TrainingData {
        // every dataset shares the same pipeline ordering
        let alc: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..8).map(|p| 0.1 + 0.1 * p as f64).collect())
            .collect();
        let costs = CostMatrix::from_dense_rows(&alc).unwrap();
        let meta = ndarray::Array2::from_shape_fn((10, 2), |(i, j)| (i * 2 + j) as f64 / 20.0);
        let pipes = ndarray::Array2::from_shape_fn((8, 3), |(p, j)| if j == 0 { p as f64 / 7.0 } else { 0.5 });
        TrainingData::new(costs, meta, pipes).unwrap()
    }

    #[test]
    fn inner_cv_on_planted_instance() {
        let data = planted_data();
        let groups: Vec<String> = (0..10).map(|i| format!("g{}", i / 2)).collect();
        let cfg = TrainConfig {
            hidden: vec![8],
            steps: 400,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let a = inner_cv_epochs(&data, &groups, &cfg, 5).unwrap();
        assert_eq!(a, 400);
        assert_eq!(inner_cv_epochs(&data, &groups, &cfg, 5).unwrap(), a);
        assert!(inner_cv_epochs(&data, &groups, &cfg, 6).is_err());
    }

    #[test]
    fn inner_cv_result_is_on_the_grid() {
        let md = small(0.05);
        let folds = make_logo_folds(&md.meta).unwrap();
        let cfg = EvalConfig {
            inner_cv_folds: Some(2),
            ..quick()
        };
        let r = evaluate_method(Method::ZapHpo, &md, &folds[..1], &[0], &cfg).unwrap();
        assert_eq!(r.test_reads_during_fit(), 0);
        let stats = FeatureStats::fit(folds[0].train.iter().map(|&i| &md.meta[i])).unwrap();
        let meta: Vec<_> = folds[0].train.iter().map(|&i| md.meta[i].clone()).collect();
        let data = TrainingData::new(
            md.costs.select_datasets(&folds[0].train),
            stats.transform_all(&meta),
            md.pipeline_vectors.clone(),
        )
        .unwrap();
        let groups: Vec<String> = meta.iter().map(|m| m.group_id.clone().unwrap()).collect();
        let steps = inner_cv_epochs(&data, &groups, &quick().train, 2).unwrap();
        assert!(checkpoint_grid(200).contains(&steps));
    }
}
