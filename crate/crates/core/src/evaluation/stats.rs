use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size evaluated by exact enumeration.
pub const EXACT_MAX_N: usize = 20;
pub const MIN_PAIRS: usize = 5;

/// Midranks (1-based) of `values`, ascending.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Signed-rank sum `Σ sign(aᵢ − bᵢ) · rank|aᵢ − bᵢ|` over nonzero differences.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub exact: bool,
}

/// Paired two-sided Wilcoxon signed-rank test. Zero differences are dropped
/// and tied magnitudes share midranks.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::InvalidArgument("NaN in paired scores".into()));
    }
    let n = diffs.len();
    if n < MIN_PAIRS {
        return Err(Error::InsufficientPairs(n));
    }
    let ranks = midranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let statistic: f64 = diffs.iter().zip(&ranks).map(|(d, r)| d.signum() * r).sum();
    if n <= EXACT_MAX_N {
        Ok(WilcoxonResult {
            statistic,
            p_value: exact_p(&ranks, statistic),
            n,
            exact: true,
        })
    } else {
        let sd = ranks.iter().map(|r| r * r).sum::<f64>().sqrt();
        let z = ((statistic.abs() - 1.0) / sd).max(0.0);
        let phi = Normal::new(0.0, 1.0).expect("standard normal");
        Ok(WilcoxonResult {
            statistic,
            p_value: (2.0 * phi.sf(z)).min(1.0),
            n,
            exact: false,
        })
    }
}

/// `P(|W| ≥ |w|)` under the sign-flip null, counted exactly over the `2ⁿ`
/// sign patterns with a subset-sum table on doubled (integer) ranks.
fn exact_p(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // counts[s] = number of sign patterns whose positive doubled ranks sum to s
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    // W = 2T⁺ − Σr, so with doubled ranks 2W = 2S − total
    let observed = (2.0 * w).round().abs() as i64;
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|&(s, _)| (2 * s as i64 - total as i64).abs() >= observed)
        .map(|(_, c)| c)
        .sum();
    extreme as f64 / 2f64.powi(ranks.len() as i32)
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_correction(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("p-value {p} out of [0,1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (i, &k) in order.iter().enumerate() {
        running = running.max(pvals[k] * (m - i) as f64).min(1.0);
        adjusted[k] = running;
    }
    Ok(adjusted)
}

/// Average ranks per method: rank 1 is the highest ALC on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    /// `per_seed[s][m]`: rank of method `m` averaged over datasets for seed `s`.
    pub per_seed: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Sample standard deviation over seeds.
    pub std: Vec<f64>,
}

impl RankTable {
    pub fn index_of(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    pub fn formatted(&self, method: &str) -> Option<String> {
        self.index_of(method).map(|i| format_rank(self.mean[i], self.std[i]))
    }
}

pub fn format_rank(mean: f64, std: f64) -> String {
    format!("{mean:.2}±{std:.2}")
}

/// `scores[m][s][d]` is the ALC of method `m` on dataset `d` for seed `s`.
pub fn average_ranks(methods: &[String], scores: &[Vec<Vec<f64>>]) -> Result<RankTable> {
    if methods.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: methods.len(),
            found: scores.len(),
        });
    }
    let first = scores.first().ok_or(Error::Empty("method list"))?;
    let n_seeds = first.len();
    if n_seeds == 0 {
        return Err(Error::Empty("seed list"));
    }
    let n_datasets = first[0].len();
    if n_datasets == 0 {
        return Err(Error::Empty("dataset list"));
    }
    for (m, per_method) in scores.iter().enumerate() {
        if per_method.len() != n_seeds || per_method.iter().any(|s| s.len() != n_datasets) {
            return Err(Error::Validation(format!("missing scores for method '{}'", methods[m])));
        }
        if per_method.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Validation(format!("missing scores for method '{}'", methods[m])));
        }
    }
    let k = methods.len();
    let mut per_seed = vec![vec![0.0; k]; n_seeds];
    for (s, row) in per_seed.iter_mut().enumerate() {
        for d in 0..n_datasets {
            let neg: Vec<f64> = scores.iter().map(|m| -m[s][d]).collect();
            for (acc, r) in row.iter_mut().zip(midranks(&neg)) {
                *acc += r;
            }
        }
        row.iter_mut().for_each(|v| *v /= n_datasets as f64);
    }
    let (mean, std) = (0..k)
        .map(|m| mean_std(&per_seed.iter().map(|r| r[m]).collect::<Vec<_>>()))
        .unzip();
    Ok(RankTable {
        methods: methods.to_vec(),
        per_seed,
        mean,
        std,
    })
}
