#![allow(dead_code)]

use ndarray::Array2;
use rand::Rng as _;
use zap_core::meta_dataset::CostMatrix;
use zap_core::rng::rng_from_seed;
use zap_core::surrogate::{
    batch_loss, build_triples, loss_and_gradients, observed_cells, Batch, Objective, SurrogateParams, TrainingData,
};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Denominator floor for the relative error of near-zero components.
pub const REL_FLOOR: f64 = 1e-6;

/// Hidden-unit on/off pattern over every input row, recomputed from the flat
/// parameter layout (per layer: row-major `out × in` weights, then biases).
pub fn activation_pattern(sizes: &[usize], theta: &[f64], inputs: &Array2<f64>) -> Vec<bool> {
    let mut pattern = Vec::new();
    for x in inputs.rows() {
        let mut a: Vec<f64> = x.to_vec();
        let mut offset = 0;
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &theta[offset..offset + n_in * n_out];
            let b = &theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
            offset += n_in * n_out + n_out;
            let z: Vec<f64> = (0..n_out)
                .map(|o| b[o] + (0..n_in).map(|i| w[o * n_in + i] * a[i]).sum::<f64>())
                .collect();
            if l + 2 < sizes.len() {
                pattern.extend(z.iter().map(|v| *v > 0.0));
                a = z.into_iter().map(|v| v.max(0.0)).collect();
            }
        }
    }
    pattern
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst: f64,
}

impl GradCheck {
    pub fn merge(&mut self, o: GradCheck) {
        self.checked += o.checked;
        self.skipped_kinks += o.skipped_kinks;
        self.worst = self.worst.max(o.worst);
    }
}

/// Compares analytic gradients with central differences for one random
/// network, matrix and batch.
pub fn gradient_check(seed: u64, objective: Objective) -> GradCheck {
    let mut rng = rng_from_seed(seed);
    let (n_d, n_p, width_p, width_m) = (3, 4, 3, 2);
    let rows: Vec<Vec<f64>> = (0..n_d)
        .map(|_| (0..n_p).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let costs = CostMatrix::from_dense_rows(&rows).unwrap();
    let meta = Array2::from_shape_simple_fn((n_d, width_m), || rng.random_range(-1.5..1.5));
    let pipes = Array2::from_shape_simple_fn((n_p, width_p), || rng.random_range(0.0..1.0));
    let data = TrainingData::new(costs, meta, pipes).unwrap();
    let depth = rng.random_range(1..=2);
    let mut sizes = vec![width_p + width_m];
    for _ in 0..depth {
        sizes.push(rng.random_range(2..=6));
    }
    sizes.push(1);
    let n_params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let theta: Vec<f64> = (0..n_params).map(|_| rng.random_range(-1.0..1.0)).collect();
    let params = SurrogateParams::from_flat(sizes.clone(), theta.clone()).unwrap();
    let weight_decay = if rng.random_bool(0.5) { 0.0 } else { 1e-3 };

    let triples = build_triples(&data.costs);
    let cells = observed_cells(&data.costs);
    let batch_triples: Vec<_> = (0..6).map(|_| triples[rng.random_range(0..triples.len())]).collect();
    let batch_cells: Vec<_> = (0..6).map(|_| cells[rng.random_range(0..cells.len())]).collect();
    let (batch, pairs): (Batch<'_>, Vec<(usize, usize)>) = if objective.is_ranking() {
        (
            Batch::Triples(&batch_triples),
            batch_triples
                .iter()
                .flat_map(|t| [(t.dataset, t.better), (t.dataset, t.worse)])
                .collect(),
        )
    } else {
        (
            Batch::Cells(&batch_cells),
            batch_cells.iter().map(|c| (c.dataset, c.pipeline)).collect(),
        )
    };
    let inputs = data.inputs(pairs.into_iter());

    let full = |th: &[f64]| {
        let p = SurrogateParams::from_flat(sizes.clone(), th.to_vec()).unwrap();
        batch_loss(&p, &data, &batch, objective).unwrap() + weight_decay * p.weight_norm_sq_half()
    };
    let (_, grad) = loss_and_gradients(&params, &data, &batch, objective, weight_decay).unwrap();
    let mut out = GradCheck::default();
    for i in 0..n_params {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += FD_STEP;
        minus[i] -= FD_STEP;
        if activation_pattern(&sizes, &plus, &inputs) != activation_pattern(&sizes, &minus, &inputs) {
            out.skipped_kinks += 1;
            continue;
        }
        let numeric = (full(&plus) - full(&minus)) / (2.0 * FD_STEP);
        let analytic = grad.as_slice()[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        out.worst = out.worst.max(rel);
        out.checked += 1;
    }
    out
}
