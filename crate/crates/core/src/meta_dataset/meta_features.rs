use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution sentinel for datasets whose images vary in size.
pub const VARYING_RESOLUTION: i64 = -1;

/// Number of components produced by [`featurize`].
pub const META_FEATURE_DIM: usize = 5;

const STD_FLOOR: f64 = 1e-8;

const COLUMNS: [&str; 6] = [
    "dataset_id",
    "n_train_images",
    "n_channels",
    "resolution",
    "n_classes",
    "group_id",
];

/// Cheap descriptors of one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMetaFeatures {
    pub dataset_id: String,
    pub n_train_images: u64,
    pub n_channels: u32,
    /// Pixels per side, or [`VARYING_RESOLUTION`].
    pub resolution: i64,
    pub n_classes: u32,
    /// Core dataset this variant was derived from.
    pub group_id: Option<String>,
}

impl DatasetMetaFeatures {
    pub fn validate(&self) -> Result<()> {
        if self.n_train_images < 1 {
            return Err(Error::Validation(format!(
                "{}: n_train_images must be >= 1",
                self.dataset_id
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::Validation(format!(
                "{}: n_classes must be >= 2, got {}",
                self.dataset_id, self.n_classes
            )));
        }
        if self.n_channels != 1 && self.n_channels != 3 {
            return Err(Error::Validation(format!(
                "{}: n_channels must be 1 or 3, got {}",
                self.dataset_id, self.n_channels
            )));
        }
        if self.resolution <= 0 && self.resolution != VARYING_RESOLUTION {
            return Err(Error::Validation(format!(
                "{}: resolution must be > 0 or -1, got {}",
                self.dataset_id, self.resolution
            )));
        }
        Ok(())
    }

    /// Log-transformed features before standardization:
    /// `[ln n_train, n_channels, ln max(resolution,1), varying flag, ln n_classes]`.
    pub fn raw_features(&self) -> [f64; META_FEATURE_DIM] {
        let varying = self.resolution == VARYING_RESOLUTION;
        [
            (self.n_train_images as f64).ln(),
            f64::from(self.n_channels),
            (self.resolution.max(1) as f64).ln(),
            if varying { 1.0 } else { 0.0 },
            f64::from(self.n_classes).ln(),
        ]
    }
}

fn parse_field<T: std::str::FromStr>(cell: &str, row: usize, column: &str) -> Result<T> {
    cell.trim().parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse '{cell}'"),
    })
}

pub fn read_meta_features<R: Read>(reader: R) -> Result<Vec<DatasetMetaFeatures>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut pos = [0usize; 6];
    for (slot, name) in pos.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Validation(format!("missing column '{name}'")))?;
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let cell = |k: usize| rec.get(pos[k]).unwrap_or("");
        let group = cell(5).trim();
        let mf = DatasetMetaFeatures {
            dataset_id: cell(0).trim().to_string(),
            n_train_images: parse_field(cell(1), row, COLUMNS[1])?,
            n_channels: parse_field(cell(2), row, COLUMNS[2])?,
            resolution: parse_field(cell(3), row, COLUMNS[3])?,
            n_classes: parse_field(cell(4), row, COLUMNS[4])?,
            group_id: (!group.is_empty()).then(|| group.to_string()),
        };
        mf.validate()?;
        if !seen.insert(mf.dataset_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate dataset_id '{}'",
                mf.dataset_id
            )));
        }
        out.push(mf);
    }
    Ok(out)
}

pub fn load_meta_features(path: impl AsRef<Path>) -> Result<Vec<DatasetMetaFeatures>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_meta_features(file)
}

pub fn write_meta_features<W: Write>(meta: &[DatasetMetaFeatures], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    for m in meta {
        w.write_record([
            m.dataset_id.clone(),
            m.n_train_images.to_string(),
            m.n_channels.to_string(),
            m.resolution.to_string(),
            m.n_classes.to_string(),
            m.group_id.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_meta_features(meta: &[DatasetMetaFeatures], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_meta_features(meta, std::io::BufWriter::new(file))
}

/// Per-dimension standardization fitted on meta-train datasets only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; META_FEATURE_DIM],
    pub std: [f64; META_FEATURE_DIM],
}

impl FeatureStats {
    pub fn new(mean: [f64; META_FEATURE_DIM], std: [f64; META_FEATURE_DIM]) -> Self {
        Self {
            mean,
            std: std.map(|s| s.max(STD_FLOOR)),
        }
    }

    /// Population mean and standard deviation of the raw features.
    pub fn fit<'a>(meta: impl IntoIterator<Item = &'a DatasetMetaFeatures>) -> Result<Self> {
        let raws: Vec<_> = meta.into_iter().map(|m| m.raw_features()).collect();
        if raws.is_empty() {
            return Err(Error::Empty("cannot fit feature stats on zero datasets"));
        }
        let n = raws.len() as f64;
        let mut mean = [0.0; META_FEATURE_DIM];
        for r in &raws {
            for k in 0..META_FEATURE_DIM {
                mean[k] += r[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; META_FEATURE_DIM];
        for r in &raws {
            for k in 0..META_FEATURE_DIM {
                var[k] += (r[k] - mean[k]).powi(2);
            }
        }
        Ok(Self::new(mean, var.map(|v| (v / n).sqrt())))
    }

    /// Stacks featurized vectors of `meta` into a `datasets × K` matrix.
    pub fn transform_all(&self, meta: &[DatasetMetaFeatures]) -> Array2<f64> {
        let mut out = Array2::zeros((meta.len(), META_FEATURE_DIM));
        for (mut row, m) in out.rows_mut().into_iter().zip(meta) {
            row.assign(&ndarray::ArrayView1::from(&featurize(m, self)));
        }
        out
    }
}

/// Z-scored log features of one dataset.
pub fn featurize(mf: &DatasetMetaFeatures, stats: &FeatureStats) -> [f64; META_FEATURE_DIM] {
    let raw = mf.raw_features();
    std::array::from_fn(|k| (raw[k] - stats.mean[k]) / stats.std[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const HEADER: &str = "dataset_id,n_train_images,n_channels,resolution,n_classes,group_id\n";

    fn mf(id: &str, n: u64, ch: u32, res: i64, k: u32) -> DatasetMetaFeatures {
        DatasetMetaFeatures {
            dataset_id: id.into(),
            n_train_images: n,
            n_channels: ch,
            resolution: res,
            n_classes: k,
            group_id: Some("g".into()),
        }
    }

    #[test]
    fn parses_a_row() {
        let v = read_meta_features(format!("{HEADER}d1,5000,3,32,10,g1\n").as_bytes()).unwrap();
        assert_eq!(
            v,
            vec![DatasetMetaFeatures {
                dataset_id: "d1".into(),
                n_train_images: 5000,
                n_channels: 3,
                resolution: 32,
                n_classes: 10,
                group_id: Some("g1".into()),
            }]
        );
    }

    #[test]
    fn accepts_varying_resolution_sentinel() {
        let v = read_meta_features(format!("{HEADER}d1,5000,1,-1,10,g1\n").as_bytes()).unwrap();
        assert_eq!(v[0].resolution, VARYING_RESOLUTION);
    }

    #[test]
    fn rejects_single_class() {
        let err = read_meta_features(format!("{HEADER}d1,5000,3,32,1,g1\n").as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn rejects_duplicates_and_missing_columns() {
        let dup = format!("{HEADER}d1,5000,3,32,10,g1\nd1,10,1,28,2,g1\n");
        assert!(read_meta_features(dup.as_bytes()).is_err());
        let missing = "dataset_id,n_train_images,n_channels,resolution,group_id\nd1,5,3,32,g\n";
        let err = read_meta_features(missing.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("n_classes"));
    }

    #[test]
    fn empty_group_is_none() {
        let v = read_meta_features(format!("{HEADER}d1,5000,3,32,10,\n").as_bytes()).unwrap();
        assert_eq!(v[0].group_id, None);
    }

    #[test]
    fn featurize_at_mean_is_zero() {
        let m = mf("a", 1000, 3, 64, 10);
        let stats = FeatureStats::new(m.raw_features(), [2.0; META_FEATURE_DIM]);
        assert_eq!(featurize(&m, &stats), [0.0; META_FEATURE_DIM]);
    }

    #[test]
    fn varying_resolution_sets_flag() {
        let m = mf("a", 1000, 3, VARYING_RESOLUTION, 10);
        let stats = FeatureStats::new([0.0; 5], [1.0; 5]);
        let z = featurize(&m, &stats);
        assert_eq!(z[3], 1.0);
        assert_eq!(z[2], 0.0);
        let stats = FeatureStats::new([7.0, 2.0, 3.0, 0.25, 2.0], [2.0, 1.0, 1.5, 0.5, 1.0]);
        let z = featurize(&m, &stats);
        assert_abs_diff_eq!(z[2], (0.0 - 3.0) / 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(z[3], (1.0 - 0.25) / 0.5, epsilon = 1e-15);
    }

    #[test]
    fn train_size_changes_only_first_component() {
        let small = mf("s", 100, 3, 32, 10);
        let large = mf("l", 10_000, 3, 32, 10);
        let stats = FeatureStats::new([6.0, 2.0, 3.0, 0.2, 2.5], [2.0, 1.0, 1.0, 0.4, 1.0]);
        let (zs, zl) = (featurize(&small, &stats), featurize(&large, &stats));
        // hand-computed: (ln 100 - 6)/2 and (ln 10000 - 6)/2
        assert_abs_diff_eq!(zs[0], (4.605_170_185_988_091 - 6.0) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(zl[0], (9.210_340_371_976_184 - 6.0) / 2.0, epsilon = 1e-12);
        assert_eq!(zs[1..], zl[1..]);
    }

    #[test]
    fn stats_floor_standard_deviation() {
        let all_same = vec![mf("a", 10, 1, 28, 2), mf("b", 10, 1, 28, 2)];
        let stats = FeatureStats::fit(&all_same).unwrap();
        assert!(stats.std.iter().all(|&s| s >= 1e-8));
        assert_eq!(featurize(&all_same[0], &stats), [0.0; 5]);
    }

    #[test]
    fn fitted_set_is_standardized() {
        let set: Vec<_> = (0..40u64)
            .map(|i| {
                let res = if i % 4 == 0 { VARYING_RESOLUTION } else { 28 + 7 * i as i64 };
                mf(&format!("d{i}"), 20 + i * i * 37, if i % 3 == 0 { 1 } else { 3 }, res, 2 + (i as u32 * 7) % 98)
            })
            .collect();
        let stats = FeatureStats::fit(&set).unwrap();
        let z = stats.transform_all(&set);
        for k in 0..META_FEATURE_DIM {
            let col = z.column(k);
            let mean = col.mean().unwrap();
            let std = (col.mapv(|v| (v - mean).powi(2)).sum() / col.len() as f64).sqrt();
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(std, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn csv_round_trip() {
        let v = vec![mf("a", 10, 1, 28, 2), mf("b", 99, 3, VARYING_RESOLUTION, 7)];
        let mut buf = Vec::new();
        write_meta_features(&v, &mut buf).unwrap();
        assert_eq!(read_meta_features(buf.as_slice()).unwrap(), v);
    }
}
