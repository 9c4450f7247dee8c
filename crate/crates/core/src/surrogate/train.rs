use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::objective::{build_triples, loss_and_gradients, observed_cells, Batch, Cell, Objective, TrainingData, Triple};
use super::SurrogateParams;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Triples (ranking objectives) or cells (least squares) per step.
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub objective: Objective,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            learning_rate: 1e-3,
            batch_size: 64,
            steps: 1000,
            seed: 0,
            objective: Objective::RankingBounded,
            weight_decay: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::InvalidArgument("batch size and steps must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight decay must be >= 0".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self, input_dim: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input_dim);
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: SurrogateParams,
    /// Batch loss (without weight decay) at every step.
    pub history: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First/second moment estimates with bias correction.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        }
    }
}

enum Pool {
    Triples(Vec<Triple>),
    Cells(Vec<Cell>),
}

impl Pool {
    fn build(data: &TrainingData, objective: Objective) -> Result<Self> {
        if objective.is_ranking() {
            let t = build_triples(&data.costs);
            if t.is_empty() {
                return Err(Error::Empty("no triples: every observed row is tied or has fewer than two cells"));
            }
            Ok(Pool::Triples(t))
        } else {
            let c = observed_cells(&data.costs);
            if c.is_empty() {
                return Err(Error::Empty("no observed cells"));
            }
            Ok(Pool::Cells(c))
        }
    }
}

pub fn train(data: &TrainingData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_checkpoints(data, cfg, &[], |_, _| Ok(()))
}

/// Trains and calls `on_checkpoint(step, params)` after each listed step
/// (1-based step counts).
pub fn train_with_checkpoints(
    data: &TrainingData,
    cfg: &TrainConfig,
    checkpoints: &[usize],
    mut on_checkpoint: impl FnMut(usize, &SurrogateParams) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pool = Pool::build(data, cfg.objective)?;
    let mut rng: Rng = rng_from_seed(cfg.seed);
    let mut params = SurrogateParams::init(cfg.layer_sizes(data.input_dim()), &mut rng)?;
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.steps);
    let mut triple_batch = Vec::with_capacity(cfg.batch_size);
    let mut cell_batch = Vec::with_capacity(cfg.batch_size);
    let mut next_ckpt = checkpoints.iter().peekable();

    for step in 1..=cfg.steps {
        let (loss, grad) = match &pool {
            Pool::Triples(all) => {
                triple_batch.clear();
                triple_batch.extend((0..cfg.batch_size).map(|_| all[rng.random_range(0..all.len())]));
                loss_and_gradients(&params, data, &Batch::Triples(&triple_batch), cfg.objective, cfg.weight_decay)?
            }
            Pool::Cells(all) => {
                cell_batch.clear();
                cell_batch.extend((0..cfg.batch_size).map(|_| all[rng.random_range(0..all.len())]));
                loss_and_gradients(&params, data, &Batch::Cells(&cell_batch), cfg.objective, cfg.weight_decay)?
            }
        };
        adam.step(params.as_mut_slice(), grad.as_slice());
        history.push(loss);
        while next_ckpt.peek().is_some_and(|&&c| c <= step) {
            if *next_ckpt.next().unwrap() == step {
                on_checkpoint(step, &params)?;
            }
        }
    }
    if params.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("training diverged to non-finite parameters".into()));
    }
    Ok(TrainOutcome { params, history })
}
