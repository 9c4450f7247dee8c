//! Pipeline selection for an unseen dataset: the zero-shot surrogate argmin
//! and the reference selectors (single best, uniform random, k-NN).
//!
//! Every selector returns a cost-oriented score vector: lower is better and
//! the chosen index is its argmin, ties going to the lowest index.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta_dataset::CostMatrix;
use crate::rng::rng_from_seed;
use crate::surrogate::SurrogateParams;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ZapHpo,
    ZapAsKnn,
    SingleBest,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ZapHpo, Method::ZapAsKnn, Method::SingleBest, Method::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ZapHpo => "zap_hpo",
            Method::ZapAsKnn => "zap_as_knn",
            Method::SingleBest => "single_best",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: usize,
    /// One score per candidate; lower is better.
    pub scores: Vec<f64>,
    pub method: Method,
    pub seed: Option<u64>,
}

impl SelectionResult {
    fn from_scores(scores: Vec<f64>, method: Method, seed: Option<u64>) -> Result<Self> {
        let chosen = argmin(&scores).ok_or(Error::Empty("candidate list"))?;
        Ok(Self {
            chosen,
            scores,
            method,
            seed,
        })
    }
}

fn cmp_score(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// First index of the smallest value.
pub fn argmin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| cmp_score(s, scores[b]) == Ordering::Less) {
            best = Some(i);
        }
    }
    best
}

fn surrogate_scores(p: &SurrogateParams, meta_vec: &[f64], candidates: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if candidates.nrows() == 0 {
        return Err(Error::Empty("candidate list"));
    }
    let l = candidates.ncols();
    let d = l + meta_vec.len();
    if d != p.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: p.input_dim(),
            found: d,
        });
    }
    let mut x = Array2::zeros((candidates.nrows(), d));
    for (mut row, cand) in x.rows_mut().into_iter().zip(candidates.rows()) {
        row.slice_mut(ndarray::s![..l]).assign(&cand);
        for (dst, src) in row.slice_mut(ndarray::s![l..]).iter_mut().zip(meta_vec) {
            *dst = *src;
        }
    }
    Ok(p.forward_batch(x.view())?.to_vec())
}

/// Scores every candidate pipeline vector with the surrogate and picks the lowest.
pub fn select_zero_shot(
    p: &SurrogateParams,
    meta_vec: &[f64],
    candidates: ArrayView2<'_, f64>,
) -> Result<SelectionResult> {
    SelectionResult::from_scores(surrogate_scores(p, meta_vec, candidates)?, Method::ZapHpo, None)
}

/// Candidate indices sorted by surrogate score, best first.
pub fn rank_pipelines(p: &SurrogateParams, meta_vec: &[f64], candidates: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    let scores = surrogate_scores(p, meta_vec, candidates)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| cmp_score(scores[a], scores[b]).then(a.cmp(&b)));
    Ok(order)
}

/// `1 − mean ALC` per pipeline over the observed cells of `rows`, in ascending row order.
fn mean_cost_scores(m: &CostMatrix, rows: &[usize]) -> Result<Vec<f64>> {
    (0..m.n_pipelines())
        .map(|p| {
            let mut sum = 0.0;
            let mut n = 0usize;
            for &d in rows {
                if let Some(v) = m.get(d, p) {
                    sum += v;
                    n += 1;
                }
            }
            if n == 0 {
                Err(Error::Validation(format!(
                    "pipeline '{}' has no observed cells",
                    m.pipeline_ids()[p]
                )))
            } else {
                Ok(1.0 - sum / n as f64)
            }
        })
        .collect()
}

/// The pipeline with the highest mean ALC over its observed cells.
pub fn select_single_best(m: &CostMatrix) -> Result<SelectionResult> {
    if m.n_pipelines() == 0 {
        return Err(Error::Empty("candidate list"));
    }
    let rows: Vec<usize> = (0..m.n_datasets()).collect();
    SelectionResult::from_scores(mean_cost_scores(m, &rows)?, Method::SingleBest, None)
}

/// A uniform draw over `n_candidates`; the score vector is zero except at the draw.
pub fn select_random(n_candidates: usize, seed: u64) -> Result<SelectionResult> {
    if n_candidates == 0 {
        return Err(Error::Empty("candidate list"));
    }
    let pick = rng_from_seed(seed).random_range(0..n_candidates);
    let mut scores = vec![1.0; n_candidates];
    scores[pick] = 0.0;
    SelectionResult::from_scores(scores, Method::Random, Some(seed))
}

/// Indices of the `k` rows of `train_meta` closest to `query`, nearest first.
pub fn nearest_rows(train_meta: ArrayView2<'_, f64>, query: &[f64], k: usize) -> Result<Vec<usize>> {
    if query.len() != train_meta.ncols() {
        return Err(Error::DimensionMismatch {
            expected: train_meta.ncols(),
            found: query.len(),
        });
    }
    if k == 0 || k > train_meta.nrows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in [1, {}]",
            train_meta.nrows()
        )));
    }
    let dist: Vec<f64> = train_meta
        .rows()
        .into_iter()
        .map(|r| r.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| cmp_score(dist[a], dist[b]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

/// Mean-ALC vote among the `k` meta-train datasets nearest to `query`.
pub fn select_knn(m: &CostMatrix, train_meta: ArrayView2<'_, f64>, query: &[f64], k: usize) -> Result<SelectionResult> {
    if train_meta.nrows() != m.n_datasets() {
        return Err(Error::DimensionMismatch {
            expected: m.n_datasets(),
            found: train_meta.nrows(),
        });
    }
    let mut rows = nearest_rows(train_meta, query, k)?;
    rows.sort_unstable();
    SelectionResult::from_scores(mean_cost_scores(m, &rows)?, Method::ZapAsKnn, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn linear_params(w: &[f64], b: f64) -> SurrogateParams {
        let mut data = w.to_vec();
        data.push(b);
        SurrogateParams::from_flat(vec![w.len(), 1], data).unwrap()
    }

    #[test]
    fn zero_shot_argmin() {
        // score = candidate value, meta ignored
        let p = linear_params(&[1.0, 0.0], 0.0);
        let c = array![[0.3], [0.1], [0.7]];
        let r = select_zero_shot(&p, &[5.0], c.view()).unwrap();
        assert_eq!(r.chosen, 1);
        assert_eq!(rank_pipelines(&p, &[5.0], c.view()).unwrap(), vec![1, 0, 2]);
        let single = select_zero_shot(&p, &[5.0], array![[9.0]].view()).unwrap();
        assert_eq!(single.chosen, 0);
        let shifted = linear_params(&[1.0, 0.0], 3.0);
        assert_eq!(select_zero_shot(&shifted, &[5.0], c.view()).unwrap().chosen, 1);
    }

    #[test]
    fn zero_shot_ties_and_errors() {
        let p = linear_params(&[0.0, 0.0], 1.0);
        let c = array![[0.3], [0.1], [0.7]];
        assert_eq!(rank_pipelines(&p, &[0.0], c.view()).unwrap(), vec![0, 1, 2]);
        let empty = Array2::<f64>::zeros((0, 1));
        assert!(select_zero_shot(&p, &[0.0], empty.view()).is_err());
        assert!(matches!(
            select_zero_shot(&p, &[0.0, 1.0], c.view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rank_is_label_invariant() {
        let p = linear_params(&[1.0, 0.0], 0.0);
        let c = array![[0.3], [0.1], [0.7], [0.2]];
        let rev = array![[0.2], [0.7], [0.1], [0.3]];
        let a = rank_pipelines(&p, &[0.0], c.view()).unwrap();
        let b = rank_pipelines(&p, &[0.0], rev.view()).unwrap();
        let mapped: Vec<usize> = b.iter().map(|&i| 3 - i).collect();
        assert_eq!(a, mapped);
    }

    #[test]
    fn single_best_examples() {
        let m = CostMatrix::from_dense_rows(&[vec![0.9, 0.1], vec![0.8, 0.2]]).unwrap();
        let r = select_single_best(&m).unwrap();
        assert_eq!(r.chosen, 0);
        assert!((r.scores[0] - 0.15).abs() < 1e-12);
        let tie = CostMatrix::from_dense_rows(&[vec![0.5, 0.5], vec![0.4, 0.4]]).unwrap();
        assert_eq!(select_single_best(&tie).unwrap().chosen, 0);
    }

    #[test]
    fn single_best_sparse() {
        let ids = |p: &str, n| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let m = CostMatrix::new(
            ids("d", 2),
            ids("p", 2),
            vec![vec![Some(0.6), Some(0.5)], vec![None, Some(0.9)]],
        )
        .unwrap();
        assert_eq!(select_single_best(&m).unwrap().chosen, 1);
        let unobserved = CostMatrix::new(ids("d", 1), ids("p", 2), vec![vec![Some(0.6), None]]).unwrap();
        let err = select_single_best(&unobserved).unwrap_err().to_string();
        assert!(err.contains("p1"), "{err}");
    }

    #[test]
    fn random_examples() {
        assert_eq!(select_random(1, 42).unwrap().chosen, 0);
        assert_eq!(select_random(7, 3).unwrap(), select_random(7, 3).unwrap());
        assert!(select_random(0, 1).is_err());
    }

    #[test]
    fn random_is_uniform() {
        let n = 100_000;
        let mut counts = [0usize; 4];
        for s in 0..n {
            counts[select_random(4, s).unwrap().chosen] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn knn_examples() {
        let m = CostMatrix::from_dense_rows(&[vec![0.9, 0.1, 0.3], vec![0.2, 0.8, 0.3], vec![0.1, 0.2, 0.95]]).unwrap();
        let meta = array![[0.1, 0.0], [0.0, 0.2], [5.0, 0.0]];
        let q = [0.0, 0.0];
        assert_eq!(nearest_rows(meta.view(), &q, 2).unwrap(), vec![0, 1]);
        // rows 0 and 1 vote: means (0.55, 0.45, 0.3)
        assert_eq!(select_knn(&m, meta.view(), &q, 2).unwrap().chosen, 0);
        assert_eq!(select_knn(&m, meta.view(), &[5.0, 0.0], 1).unwrap().chosen, 2);
        assert_eq!(
            select_knn(&m, meta.view(), &q, 3).unwrap().scores,
            select_single_best(&m).unwrap().scores
        );
        assert!(select_knn(&m, meta.view(), &q, 0).is_err());
        assert!(select_knn(&m, meta.view(), &q, 4).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("oracle".parse::<Method>().is_err());
    }
}
