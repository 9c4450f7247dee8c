use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Observed anytime scores (ALC, higher is better) of pipelines on datasets.
///
/// Rows are datasets, columns are pipelines. Cells that were never evaluated
/// are unobserved and can only be reached through the mask-aware getters.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    dataset_ids: Vec<String>,
    pipeline_ids: Vec<String>,
    values: Array2<f64>,
    observed: Array2<bool>,
}

fn check_unique(ids: &[String], axis: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Validation(format!("duplicate {axis} id '{id}'")));
        }
    }
    Ok(())
}

fn check_alc(v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Validation(format!("value {v} out of [0,1]")))
    }
}

impl CostMatrix {
    /// Builds a matrix from per-dataset rows; `None` marks an unobserved cell.
    pub fn new(
        dataset_ids: Vec<String>,
        pipeline_ids: Vec<String>,
        rows: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        check_unique(&dataset_ids, "dataset")?;
        check_unique(&pipeline_ids, "pipeline")?;
        if rows.len() != dataset_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: dataset_ids.len(),
                found: rows.len(),
            });
        }
        let (n_d, n_p) = (dataset_ids.len(), pipeline_ids.len());
        let mut values = Array2::zeros((n_d, n_p));
        let mut observed = Array2::from_elem((n_d, n_p), false);
        for (d, row) in rows.into_iter().enumerate() {
            if row.len() != n_p {
                return Err(Error::DimensionMismatch {
                    expected: n_p,
                    found: row.len(),
                });
            }
            for (p, cell) in row.into_iter().enumerate() {
                if let Some(v) = cell {
                    check_alc(v)?;
                    values[[d, p]] = v;
                    observed[[d, p]] = true;
                }
            }
        }
        Ok(Self {
            dataset_ids,
            pipeline_ids,
            values,
            observed,
        })
    }

    /// Fully observed matrix from a dense `datasets × pipelines` grid.
    pub fn dense(
        dataset_ids: Vec<String>,
        pipeline_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        let rows = values
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| Some(v)).collect())
            .collect();
        Self::new(dataset_ids, pipeline_ids, rows)
    }

    /// Dense matrix with generated ids `d0, d1, …` and `p0, p1, …`.
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_p = rows.first().map_or(0, Vec::len);
        Self::new(
            (0..rows.len()).map(|i| format!("d{i}")).collect(),
            (0..n_p).map(|j| format!("p{j}")).collect(),
            rows.iter()
                .map(|r| r.iter().map(|&v| Some(v)).collect())
                .collect(),
        )
    }

    pub fn n_datasets(&self) -> usize {
        self.dataset_ids.len()
    }

    pub fn n_pipelines(&self) -> usize {
        self.pipeline_ids.len()
    }

    pub fn dataset_ids(&self) -> &[String] {
        &self.dataset_ids
    }

    pub fn pipeline_ids(&self) -> &[String] {
        &self.pipeline_ids
    }

    pub fn dataset_index(&self, id: &str) -> Option<usize> {
        self.dataset_ids.iter().position(|d| d == id)
    }

    pub fn pipeline_index(&self, id: &str) -> Option<usize> {
        self.pipeline_ids.iter().position(|p| p == id)
    }

    /// ALC of `pipeline` on `dataset`, or `None` when unobserved.
    #[inline]
    pub fn get(&self, dataset: usize, pipeline: usize) -> Option<f64> {
        if self.observed[[dataset, pipeline]] {
            Some(self.values[[dataset, pipeline]])
        } else {
            None
        }
    }

    #[inline]
    pub fn is_observed(&self, dataset: usize, pipeline: usize) -> bool {
        self.observed[[dataset, pipeline]]
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.observed
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    /// Observed `(pipeline, alc)` pairs of one dataset row.
    pub fn row(&self, dataset: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_pipelines()).filter_map(move |p| self.get(dataset, p).map(|v| (p, v)))
    }

    /// Observed `(dataset, alc)` pairs of one pipeline column.
    pub fn column(&self, pipeline: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n_datasets()).filter_map(move |d| self.get(d, pipeline).map(|v| (d, v)))
    }

    /// Observed `(dataset, pipeline, alc)` triples in row-major order.
    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_datasets()).flat_map(move |d| self.row(d).map(move |(p, v)| (d, p, v)))
    }

    /// Sub-matrix over the given dataset rows, in the given order.
    pub fn select_datasets(&self, rows: &[usize]) -> CostMatrix {
        let n_p = self.n_pipelines();
        let mut values = Array2::zeros((rows.len(), n_p));
        let mut observed = Array2::from_elem((rows.len(), n_p), false);
        for (new, &old) in rows.iter().enumerate() {
            for p in 0..n_p {
                if let Some(v) = self.get(old, p) {
                    values[[new, p]] = v;
                    observed[[new, p]] = true;
                }
            }
        }
        CostMatrix {
            dataset_ids: rows.iter().map(|&r| self.dataset_ids[r].clone()).collect(),
            pipeline_ids: self.pipeline_ids.clone(),
            values,
            observed,
        }
    }

    /// Applies `f(dataset, alc)` to every observed cell. Results must stay in [0,1].
    pub fn map_observed(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<CostMatrix> {
        let mut out = self.clone();
        for ((d, p), v) in out.values.indexed_iter_mut() {
            if self.observed[[d, p]] {
                *v = f(d, *v);
                check_alc(*v)?;
            }
        }
        Ok(out)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(Error::Empty("cost matrix file has no header")),
        };
        if header.get(0).map(str::trim) != Some("dataset_id") {
            return Err(Error::Parse {
                row: 1,
                column: "dataset_id".into(),
                message: "first header cell must be 'dataset_id'".into(),
            });
        }
        let pipeline_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut dataset_ids = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in records.enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() != pipeline_ids.len() + 1 {
                return Err(Error::Parse {
                    row: line,
                    column: "*".into(),
                    message: format!(
                        "expected {} cells, found {}",
                        pipeline_ids.len() + 1,
                        rec.len()
                    ),
                });
            }
            dataset_ids.push(rec[0].trim().to_string());
            let mut row = Vec::with_capacity(pipeline_ids.len());
            for (j, cell) in rec.iter().skip(1).enumerate() {
                let cell = cell.trim();
                if cell.is_empty() {
                    row.push(None);
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: pipeline_ids[j].clone(),
                    message: format!("malformed numeric cell '{cell}'"),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Validation(format!(
                        "value out of [0,1] at row {line}, column {}: {v}",
                        pipeline_ids[j]
                    )));
                }
                row.push(Some(v));
            }
            rows.push(row);
        }
        Self::new(dataset_ids, pipeline_ids, rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["dataset_id".to_string()];
        header.extend(self.pipeline_ids.iter().cloned());
        w.write_record(&header)?;
        for (d, id) in self.dataset_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(
                (0..self.n_pipelines()).map(|p| self.get(d, p).map_or(String::new(), |v| format!("{v:.6}"))),
            );
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

pub fn load_cost_matrix(path: impl AsRef<Path>) -> Result<CostMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    CostMatrix::read_csv(file)
}

pub fn save_cost_matrix(m: &CostMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    m.write_csv(std::io::BufWriter::new(file))
}

/// Keeps exactly `⌊keep_fraction · observed⌋` of the observed cells, chosen
/// uniformly without replacement.
pub fn sparsify(m: &CostMatrix, keep_fraction: f64, seed: u64) -> Result<CostMatrix> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "keep_fraction must lie in (0,1], got {keep_fraction}"
        )));
    }
    let cells: Vec<(usize, usize)> = m.observed_cells().map(|(d, p, _)| (d, p)).collect();
    let keep = (keep_fraction * cells.len() as f64).floor() as usize;
    if keep == cells.len() {
        return Ok(m.clone());
    }
    let mut rng = rng_from_seed(seed);
    let mut out = m.clone();
    out.observed.fill(false);
    for i in index::sample(&mut rng, cells.len(), keep) {
        let (d, p) = cells[i];
        out.observed[[d, p]] = true;
    }
    Ok(out)
}

/// Converts an ALC score (higher is better) into a cost (lower is better).
pub fn cost_from_alc(alc: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&alc) {
        Ok(1.0 - alc)
    } else {
        Err(Error::InvalidArgument(format!("ALC {alc} out of [0,1]")))
    }
}
