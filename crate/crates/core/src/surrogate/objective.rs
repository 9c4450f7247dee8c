use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::SurrogateParams;
use crate::error::{Error, Result};
use crate::meta_dataset::{cost_from_alc, CostMatrix};

/// Training objective of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `mean softplus(f_better − f_worse)`, bounded below by zero.
    #[default]
    RankingBounded,
    /// `mean ln σ(f_better − f_worse)`, unbounded below.
    RankingLiteral,
    /// `mean (f − cost)²` over observed cells.
    LeastSquares,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::RankingBounded => "ranking_bounded",
            Objective::RankingLiteral => "ranking_literal",
            Objective::LeastSquares => "least_squares",
        }
    }

    pub fn is_ranking(self) -> bool {
        !matches!(self, Objective::LeastSquares)
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranking_bounded" | "ranking" => Ok(Objective::RankingBounded),
            "ranking_literal" => Ok(Objective::RankingLiteral),
            "least_squares" => Ok(Objective::LeastSquares),
            other => Err(Error::InvalidArgument(format!("unknown objective '{other}'"))),
        }
    }
}

/// On dataset `dataset`, pipeline `better` has strictly lower cost than `worse`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub dataset: usize,
    pub better: usize,
    pub worse: usize,
}

/// An observed cell with its regression target in cost orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub dataset: usize,
    pub pipeline: usize,
    pub cost: f64,
}

pub enum Batch<'a> {
    Triples(&'a [Triple]),
    Cells(&'a [Cell]),
}

impl Batch<'_> {
    fn len(&self) -> usize {
        match self {
            Batch::Triples(t) => t.len(),
            Batch::Cells(c) => c.len(),
        }
    }
}

/// All strictly ordered pipeline pairs per dataset over observed cells.
pub fn build_triples(m: &CostMatrix) -> Vec<Triple> {
    let mut out = Vec::new();
    for d in 0..m.n_datasets() {
        let row: Vec<(usize, f64)> = m
            .row(d)
            .map(|(p, alc)| (p, cost_from_alc(alc).expect("stored ALC lies in [0,1]")))
            .collect();
        for (a, &(pa, ca)) in row.iter().enumerate() {
            for &(pb, cb) in &row[a + 1..] {
                if ca < cb {
                    out.push(Triple { dataset: d, better: pa, worse: pb });
                } else if cb < ca {
                    out.push(Triple { dataset: d, better: pb, worse: pa });
                }
            }
        }
    }
    out
}

pub fn observed_cells(m: &CostMatrix) -> Vec<Cell> {
    m.observed_cells()
        .map(|(dataset, pipeline, alc)| Cell {
            dataset,
            pipeline,
            cost: cost_from_alc(alc).expect("stored ALC lies in [0,1]"),
        })
        .collect()
}

/// Meta-training inputs: the matrix plus encoded rows and columns.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub costs: CostMatrix,
    /// `datasets × K` normalized meta-feature vectors.
    pub meta_vectors: Array2<f64>,
    /// `pipelines × L` encoded pipeline vectors.
    pub pipeline_vectors: Array2<f64>,
}

impl TrainingData {
    pub fn new(costs: CostMatrix, meta_vectors: Array2<f64>, pipeline_vectors: Array2<f64>) -> Result<Self> {
        if meta_vectors.nrows() != costs.n_datasets() {
            return Err(Error::DimensionMismatch {
                expected: costs.n_datasets(),
                found: meta_vectors.nrows(),
            });
        }
        if pipeline_vectors.nrows() != costs.n_pipelines() {
            return Err(Error::DimensionMismatch {
                expected: costs.n_pipelines(),
                found: pipeline_vectors.nrows(),
            });
        }
        Ok(Self {
            costs,
            meta_vectors,
            pipeline_vectors,
        })
    }

    /// Network input width: pipeline vector followed by meta-feature vector.
    pub fn input_dim(&self) -> usize {
        self.pipeline_vectors.ncols() + self.meta_vectors.ncols()
    }

    fn fill_row(&self, row: &mut [f64], dataset: usize, pipeline: usize) {
        let l = self.pipeline_vectors.ncols();
        for (dst, src) in row[..l].iter_mut().zip(self.pipeline_vectors.row(pipeline)) {
            *dst = *src;
        }
        for (dst, src) in row[l..].iter_mut().zip(self.meta_vectors.row(dataset)) {
            *dst = *src;
        }
    }

    /// Stacks `(dataset, pipeline)` inputs into an `n × input_dim` matrix.
    pub fn inputs(&self, pairs: impl ExactSizeIterator<Item = (usize, usize)>) -> Array2<f64> {
        let mut x = Array2::zeros((pairs.len(), self.input_dim()));
        for (mut row, (d, p)) in x.rows_mut().into_iter().zip(pairs) {
            self.fill_row(row.as_slice_mut().expect("standard layout"), d, p);
        }
        x
    }

    fn batch_inputs(&self, batch: &Batch<'_>) -> Array2<f64> {
        match batch {
            Batch::Triples(t) => self.inputs(
                t.iter()
                    .map(|t| (t.dataset, t.better))
                    .chain(t.iter().map(|t| (t.dataset, t.worse)))
                    .collect::<Vec<_>>()
                    .into_iter(),
            ),
            Batch::Cells(c) => self.inputs(c.iter().map(|c| (c.dataset, c.pipeline))),
        }
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Batch loss and `∂loss/∂score` per network input row.
fn loss_and_output_grad(scores: &Array1<f64>, batch: &Batch<'_>, objective: Objective) -> Result<(f64, Array1<f64>)> {
    let n = batch.len();
    let mut d = Array1::zeros(scores.len());
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    match (objective, batch) {
        (Objective::RankingBounded, Batch::Triples(_)) => {
            for t in 0..n {
                let diff = scores[t] - scores[n + t];
                loss += softplus(diff);
                let g = sigmoid(diff) * inv;
                d[t] = g;
                d[n + t] = -g;
            }
        }
        (Objective::RankingLiteral, Batch::Triples(_)) => {
            for t in 0..n {
                let diff = scores[t] - scores[n + t];
                loss -= softplus(-diff);
                let g = sigmoid(-diff) * inv;
                d[t] = g;
                d[n + t] = -g;
            }
        }
        (Objective::LeastSquares, Batch::Cells(cells)) => {
            for (i, c) in cells.iter().enumerate() {
                let r = scores[i] - c.cost;
                loss += r * r;
                d[i] = 2.0 * r * inv;
            }
        }
        (obj, _) => {
            return Err(Error::InvalidArgument(format!(
                "batch kind does not match objective {}",
                obj.as_str()
            )))
        }
    }
    Ok((loss * inv, d))
}

fn check_batch(p: &SurrogateParams, data: &TrainingData, batch: &Batch<'_>) -> Result<()> {
    if batch.len() == 0 {
        return Err(Error::Empty("batch"));
    }
    if p.input_dim() != data.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: p.input_dim(),
            found: data.input_dim(),
        });
    }
    Ok(())
}

/// Batch loss under `objective`, excluding weight decay.
pub fn batch_loss(p: &SurrogateParams, data: &TrainingData, batch: &Batch<'_>, objective: Objective) -> Result<f64> {
    check_batch(p, data, batch)?;
    let scores = p.forward_batch(data.batch_inputs(batch).view())?;
    Ok(loss_and_output_grad(&scores, batch, objective)?.0)
}

pub fn ranking_loss(p: &SurrogateParams, data: &TrainingData, triples: &[Triple]) -> Result<f64> {
    batch_loss(p, data, &Batch::Triples(triples), Objective::RankingBounded)
}

pub fn ranking_loss_literal(p: &SurrogateParams, data: &TrainingData, triples: &[Triple]) -> Result<f64> {
    batch_loss(p, data, &Batch::Triples(triples), Objective::RankingLiteral)
}

pub fn least_squares_loss(p: &SurrogateParams, data: &TrainingData, cells: &[Cell]) -> Result<f64> {
    batch_loss(p, data, &Batch::Cells(cells), Objective::LeastSquares)
}

/// Analytic gradient of `batch loss + weight_decay · ½‖W‖²` with the batch loss.
pub fn loss_and_gradients(
    p: &SurrogateParams,
    data: &TrainingData,
    batch: &Batch<'_>,
    objective: Objective,
    weight_decay: f64,
) -> Result<(f64, SurrogateParams)> {
    check_batch(p, data, batch)?;
    let cache = p.forward_cached(data.batch_inputs(batch));
    let scores = cache.output().to_owned();
    let (loss, d_out) = loss_and_output_grad(&scores, batch, objective)?;
    let mut grad = p.zeros_like();
    p.backward(&cache, d_out.view(), &mut grad);
    if weight_decay != 0.0 {
        for l in 0..p.n_layers() {
            let (a, b) = p.weight_range(l);
            for (g, w) in grad.as_mut_slice()[a..b].iter_mut().zip(&p.as_slice()[a..b]) {
                *g += weight_decay * w;
            }
        }
    }
    Ok((loss, grad))
}

pub fn gradients(
    p: &SurrogateParams,
    data: &TrainingData,
    batch: &Batch<'_>,
    objective: Objective,
    weight_decay: f64,
) -> Result<SurrogateParams> {
    Ok(loss_and_gradients(p, data, batch, objective, weight_decay)?.1)
}
