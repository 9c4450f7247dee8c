//! Anytime scoring: normalized AUC, log-warped time and the area under the
//! learning curve (ALC).
//!
//! A learning curve is a step function of NAUC values. Before the first
//! prediction the score is zero; the last value is held until the budget
//! `T`. Time is warped by `t̃(t) = ln(1 + t/t₀) / ln(1 + T/t₀)`, and the ALC is
//! the integral of the step function over `t̃ ∈ [0, 1]`, computed exactly
//! segment by segment.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlcConfig {
    /// Total budget `T` in seconds.
    pub budget: f64,
    /// Reference time `t₀` in seconds.
    pub t0: f64,
}

impl Default for AlcConfig {
    fn default() -> Self {
        Self { budget: 1200.0, t0: 60.0 }
    }
}

impl AlcConfig {
    pub fn new(budget: f64, t0: f64) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite() && t0 > 0.0 && t0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "budget and t0 must be positive, got T={budget}, t0={t0}"
            )));
        }
        Ok(Self { budget, t0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Seconds since the start of the run.
    pub t: f64,
    pub nauc: f64,
}

/// Timestamped NAUC scores with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LearningCurve {
    points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.t >= 0.0 && p.t.is_finite()) {
                return Err(Error::Validation(format!("timestamp {} must be finite and >= 0", p.t)));
            }
            if !(-1.0..=1.0).contains(&p.nauc) {
                return Err(Error::Validation(format!("nauc {} out of [-1,1]", p.nauc)));
            }
            if i > 0 && p.t <= points[i - 1].t {
                return Err(Error::Validation(format!(
                    "timestamps must increase strictly ({} after {})",
                    p.t,
                    points[i - 1].t
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(t, nauc)| CurvePoint { t, nauc }).collect())
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let points: Vec<CurvePoint> = serde_json::from_str(s)?;
        Self::new(points)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Step-function value at time `t`: zero before the first point.
    pub fn value_at(&self, t: f64) -> f64 {
        match self.points.partition_point(|p| p.t <= t) {
            0 => 0.0,
            i => self.points[i - 1].nauc,
        }
    }
}

pub fn nauc_from_auc(auc: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&auc) {
        Ok(2.0 * auc - 1.0)
    } else {
        Err(Error::InvalidArgument(format!("AUC {auc} out of [0,1]")))
    }
}

/// Mann-Whitney estimate of the ROC AUC: the fraction of (positive, negative)
/// pairs ranked correctly, ties counting one half.
pub fn binary_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("both classes must be present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Macro-averaged one-vs-rest AUC. `scores[i][c]` is the score of example `i`
/// for class `c`; classes absent from `labels` or present everywhere are skipped.
pub fn multiclass_auc(scores: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let n_classes = scores.first().map_or(0, Vec::len);
    let mut total = 0.0;
    let mut used = 0;
    for c in 0..n_classes {
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let is_c: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        if is_c.iter().all(|&b| b) || !is_c.iter().any(|&b| b) {
            continue;
        }
        total += binary_auc(&col, &is_c)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidArgument("no class has both positives and negatives".into()));
    }
    Ok(total / used as f64)
}

pub fn time_transform(t: f64, cfg: &AlcConfig) -> Result<f64> {
    if !(0.0..=cfg.budget).contains(&t) {
        return Err(Error::InvalidArgument(format!("time {t} outside [0, {}]", cfg.budget)));
    }
    Ok((t / cfg.t0).ln_1p() / (cfg.budget / cfg.t0).ln_1p())
}

/// Exact area under the step-function learning curve in warped time.
pub fn alc(curve: &LearningCurve, cfg: &AlcConfig) -> Result<f64> {
    let pts = curve.points();
    if let Some(last) = pts.last() {
        if last.t > cfg.budget {
            return Err(Error::Validation(format!(
                "timestamp {} exceeds budget {}",
                last.t, cfg.budget
            )));
        }
    }
    let mut area = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let end = pts.get(i + 1).map_or(cfg.budget, |q| q.t);
        area += p.nauc * (time_transform(end, cfg)? - time_transform(p.t, cfg)?);
    }
    Ok(area)
}
