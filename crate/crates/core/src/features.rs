//! Per-item visual features: a global retrieval vector and a local feature map.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::error::{Error, Result};

/// Shape header shared by every record of a store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureShape {
    /// Length of the global retrieval vector.
    pub global_dim: usize,
    /// Number of spatial locations in a feature map (height x width).
    pub locations: usize,
    /// Channels per location.
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemFeatures {
    pub global: Array1<f64>,
    /// `locations x channels`, one row per spatial location.
    pub map: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    shape: FeatureShape,
    records: BTreeMap<String, ItemFeatures>,
}

/// On-disk record: the map is stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub global: Vec<f64>,
    pub map: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureFile {
    #[serde(flatten)]
    pub shape: FeatureShape,
    pub records: Vec<FeatureRecord>,
}

impl FeatureStore {
    /// Validates shapes and finiteness of raw records.
    pub fn from_records(shape: FeatureShape, records: Vec<FeatureRecord>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for record in records {
            if record.global.len() != shape.global_dim {
                return Err(Error::Dimension(format!(
                    "global vector of `{}` has {} entries, expected {}",
                    record.id,
                    record.global.len(),
                    shape.global_dim
                )));
            }
            if record.map.len() != shape.locations * shape.channels {
                return Err(Error::Dimension(format!(
                    "feature map of `{}` has {} entries, expected {}x{}",
                    record.id,
                    record.map.len(),
                    shape.locations,
                    shape.channels
                )));
            }
            if record.global.iter().chain(&record.map).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of `{}`", record.id)));
            }
            let map = Array2::from_shape_vec((shape.locations, shape.channels), record.map)
                .map_err(|e| Error::Dimension(e.to_string()))?;
            let features = ItemFeatures {
                global: Array1::from_vec(record.global),
                map,
            };
            if out.insert(record.id.clone(), features).is_some() {
                return Err(Error::DuplicateId(record.id));
            }
        }
        Ok(FeatureStore {
            shape,
            records: out,
        })
    }

    pub fn shape(&self) -> FeatureShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, feature_ref: &str) -> Option<&ItemFeatures> {
        self.records.get(feature_ref)
    }

    pub fn features(&self, feature_ref: &str) -> Result<&ItemFeatures> {
        self.get(feature_ref)
            .ok_or_else(|| Error::MissingFeatures(feature_ref.to_string()))
    }

    /// Checks that the store covers exactly the items of `catalog`.
    pub fn check_against(&self, catalog: &Catalog) -> Result<()> {
        for item in catalog.items() {
            if !self.records.contains_key(&item.feature_ref) {
                return Err(Error::MissingFeatures(item.id.clone()));
            }
        }
        let known: std::collections::BTreeSet<&str> =
            catalog.items().map(|i| i.feature_ref.as_str()).collect();
        if let Some(unknown) = self.records.keys().find(|id| !known.contains(id.as_str())) {
            return Err(Error::UnknownItem(unknown.clone()));
        }
        Ok(())
    }

    pub fn to_file(&self) -> FeatureFile {
        FeatureFile {
            shape: self.shape,
            records: self
                .records
                .iter()
                .map(|(id, f)| FeatureRecord {
                    id: id.clone(),
                    global: f.global.to_vec(),
                    map: f.map.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

/// Loads a JSON feature file and checks it against the catalog.
pub fn load_features(path: &Path, catalog: &Catalog) -> Result<FeatureStore> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text, catalog)
}

pub fn parse_features(text: &str, catalog: &Catalog) -> Result<FeatureStore> {
    let file: FeatureFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let store = FeatureStore::from_records(file.shape, file.records)?;
    store.check_against(catalog)?;
    Ok(store)
}
