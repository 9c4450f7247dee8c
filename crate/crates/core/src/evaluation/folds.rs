use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta_dataset::DatasetMetaFeatures;

/// One leave-one-group-out split, by row index into the metadataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub group: String,
    pub test: Vec<usize>,
    pub train: Vec<usize>,
}

/// One fold per distinct group, in order of first appearance. Every variant
/// of the held-out group lands in the test set.
pub fn make_logo_folds(meta: &[DatasetMetaFeatures]) -> Result<Vec<FoldSpec>> {
    let mut order: Vec<&str> = Vec::new();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, m) in meta.iter().enumerate() {
        let g = m
            .group_id
            .as_deref()
            .ok_or_else(|| Error::Validation(format!("dataset '{}' has no group_id", m.dataset_id)))?;
        members
            .entry(g)
            .or_insert_with(|| {
                order.push(g);
                Vec::new()
            })
            .push(i);
    }
    Ok(order
        .into_iter()
        .map(|g| {
            let test = members[g].clone();
            let train = (0..meta.len()).filter(|i| !test.contains(i)).collect();
            FoldSpec {
                group: g.to_string(),
                test,
                train,
            }
        })
        .collect())
}
