use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::stats::{average_ranks, holm_correction, mean_std, wilcoxon_signed_rank, RankTable};
use crate::error::{Error, Result};

/// What one method achieved on one held-out dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub dataset: String,
    pub chosen: String,
    pub chosen_index: usize,
    pub alc: f64,
    pub oracle_alc: f64,
    pub regret: f64,
}

/// One (fold, seed) task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub fold: usize,
    pub group: String,
    pub seed: u64,
    /// Observed cells in the matrix used for fitting.
    pub train_cells: usize,
    /// Test-row cells read before selection started; always zero for a sound protocol.
    pub test_reads_during_fit: u64,
    pub outcomes: Vec<DatasetOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Ordered by fold, then seed.
    pub records: Vec<TaskRecord>,
}

impl EvalReport {
    /// Seeds in the order they were run.
    pub fn seeds(&self) -> Vec<u64> {
        let mut seeds = Vec::new();
        for r in &self.records {
            if !seeds.contains(&r.seed) {
                seeds.push(r.seed);
            }
        }
        seeds
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &DatasetOutcome> {
        self.records.iter().flat_map(|r| &r.outcomes)
    }

    pub fn mean_regret(&self) -> f64 {
        let (sum, n) = self.outcomes().fold((0.0, 0usize), |(s, n), o| (s + o.regret, n + 1));
        sum / n as f64
    }

    pub fn mean_regret_for_seed(&self, seed: u64) -> f64 {
        let (sum, n) = self
            .records
            .iter()
            .filter(|r| r.seed == seed)
            .flat_map(|r| &r.outcomes)
            .fold((0.0, 0usize), |(s, n), o| (s + o.regret, n + 1));
        sum / n as f64
    }

    pub fn per_seed_mean_regret(&self) -> Vec<f64> {
        self.seeds().into_iter().map(|s| self.mean_regret_for_seed(s)).collect()
    }

    pub fn test_reads_during_fit(&self) -> u64 {
        self.records.iter().map(|r| r.test_reads_during_fit).sum()
    }

    /// `(dataset ids, alc[seed][dataset])` with datasets in fold order.
    pub fn alc_by_seed(&self, seeds: &[u64]) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
        let mut ids: Option<Vec<String>> = None;
        let mut out = Vec::with_capacity(seeds.len());
        for &s in seeds {
            let outcomes: Vec<&DatasetOutcome> = self
                .records
                .iter()
                .filter(|r| r.seed == s)
                .flat_map(|r| &r.outcomes)
                .collect();
            let these: Vec<String> = outcomes.iter().map(|o| o.dataset.clone()).collect();
            match &ids {
                Some(prev) if *prev != these => {
                    return Err(Error::Validation(format!(
                        "method '{}' covers different datasets for seed {s}",
                        self.method
                    )))
                }
                None => ids = Some(these),
                _ => {}
            }
            out.push(outcomes.iter().map(|o| o.alc).collect());
        }
        Ok((ids.unwrap_or_default(), out))
    }

    /// Per-dataset ALC averaged over seeds.
    pub fn mean_alc_per_dataset(&self) -> Result<(Vec<String>, Vec<f64>)> {
        let seeds = self.seeds();
        let (ids, by_seed) = self.alc_by_seed(&seeds)?;
        let means = (0..ids.len())
            .map(|d| by_seed.iter().map(|s| s[d]).sum::<f64>() / seeds.len() as f64)
            .collect();
        Ok((ids, means))
    }
}

/// Ranks the methods on every (seed, dataset) by achieved ALC.
pub fn rank_reports(reports: &[&EvalReport]) -> Result<RankTable> {
    let first = reports.first().ok_or(Error::Empty("report list"))?;
    let seeds = first.seeds();
    let (ids, _) = first.alc_by_seed(&seeds)?;
    let mut scores = Vec::with_capacity(reports.len());
    for r in reports {
        let (these, alc) = r.alc_by_seed(&seeds)?;
        if these != ids || alc.iter().any(|s| s.len() != ids.len()) {
            return Err(Error::Validation(format!(
                "method '{}' is not scored on the same seeds and datasets",
                r.method
            )));
        }
        scores.push(alc);
    }
    let names: Vec<String> = reports.iter().map(|r| r.method.clone()).collect();
    average_ranks(&names, &scores)
}

pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn nested(report: &EvalReport) -> Value {
    let mut by_fold: BTreeMap<String, Map<String, Value>> = BTreeMap::new();
    for r in &report.records {
        let outcomes: Vec<Value> = r
            .outcomes
            .iter()
            .map(|o| {
                json!({
                    "dataset": o.dataset,
                    "chosen": o.chosen,
                    "alc": round6(o.alc),
                    "oracle_alc": round6(o.oracle_alc),
                    "regret": round6(o.regret),
                })
            })
            .collect();
        by_fold.entry(r.group.clone()).or_default().insert(
            r.seed.to_string(),
            json!({
                "train_cells": r.train_cells,
                "test_reads_during_fit": r.test_reads_during_fit,
                "datasets": outcomes,
            }),
        );
    }
    json!(by_fold)
}

/// Report document nested as method → fold group → seed.
pub fn report_json(reports: &[EvalReport], sweep: &[(f64, EvalReport)]) -> Value {
    let methods: Map<String, Value> = reports.iter().map(|r| (r.method.clone(), nested(r))).collect();
    let mut doc = Map::new();
    doc.insert("methods".into(), Value::Object(methods));
    if !sweep.is_empty() {
        let fractions: Map<String, Value> = sweep
            .iter()
            .map(|(f, r)| (format!("{f:.2}"), nested(r)))
            .collect();
        doc.insert("sparsity".into(), Value::Object(fractions));
    }
    Value::Object(doc)
}

/// Columns: method, mean_regret, std_regret, mean_rank, std_rank. The regret
/// spread is the sample standard deviation of per-seed means.
pub fn summary_csv(reports: &[EvalReport]) -> Result<String> {
    let refs: Vec<&EvalReport> = reports.iter().collect();
    let ranks = rank_reports(&refs)?;
    let mut out = String::from("method,mean_regret,std_regret,mean_rank,std_rank\n");
    for (i, r) in reports.iter().enumerate() {
        let (_, std) = mean_std(&r.per_seed_mean_regret());
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            r.method,
            r.mean_regret(),
            std,
            ranks.mean[i],
            ranks.std[i]
        )
        .expect("write to string");
    }
    Ok(out)
}

/// Pairwise Wilcoxon tests on per-dataset mean ALC, Holm-adjusted across pairs.
/// Pairs with too few nonzero differences report `NA`.
pub fn significance_csv(reports: &[EvalReport]) -> Result<String> {
    let means: Vec<(Vec<String>, Vec<f64>)> = reports
        .iter()
        .map(EvalReport::mean_alc_per_dataset)
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            if means[i].0 != means[j].0 {
                return Err(Error::Validation(format!(
                    "methods '{}' and '{}' cover different datasets",
                    reports[i].method, reports[j].method
                )));
            }
            let test = match wilcoxon_signed_rank(&means[i].1, &means[j].1) {
                Ok(t) => Some(t),
                Err(Error::InsufficientPairs(_)) => None,
                Err(e) => return Err(e),
            };
            rows.push((i, j, test));
        }
    }
    let raw: Vec<f64> = rows.iter().filter_map(|r| r.2.map(|t| t.p_value)).collect();
    let mut adjusted = holm_correction(&raw)?.into_iter();
    let mut out = String::from("method_a,method_b,n,statistic,p_value,p_holm\n");
    for (i, j, test) in rows {
        let (a, b) = (&reports[i].method, &reports[j].method);
        match test {
            Some(t) => writeln!(
                out,
                "{a},{b},{},{:.6},{:.6},{:.6}",
                t.n,
                t.statistic,
                t.p_value,
                adjusted.next().expect("one adjusted value per test")
            ),
            None => writeln!(out, "{a},{b},0,NA,NA,NA"),
        }
        .expect("write to string");
    }
    Ok(out)
}

/// Columns: fraction, mean_regret, std_regret, mean_train_cells.
pub fn sweep_csv(sweep: &[(f64, EvalReport)]) -> String {
    let mut out = String::from("fraction,mean_regret,std_regret,mean_train_cells\n");
    for (f, r) in sweep {
        let (_, std) = mean_std(&r.per_seed_mean_regret());
        let cells = r.records.iter().map(|t| t.train_cells as f64).sum::<f64>() / r.records.len().max(1) as f64;
        writeln!(out, "{f:.6},{:.6},{std:.6},{cells:.6}", r.mean_regret()).expect("write to string");
    }
    out
}
