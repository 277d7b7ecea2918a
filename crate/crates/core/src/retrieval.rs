//! Preferred-item retrieval: category/price/occasion filtering followed by a
//! nearest-neighbour ranking against the items the user picked.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ClothingType, Item, Occasion};
use crate::error::{Error, Result};
use crate::features::FeatureStore;

pub const DEFAULT_COUNTS: [(ClothingType, usize); 3] = [
    (ClothingType::TopWear, 15),
    (ClothingType::BottomWear, 3),
    (ClothingType::FootWear, 2),
];

pub fn default_count(kind: ClothingType) -> usize {
    DEFAULT_COUNTS
        .iter()
        .find(|(t, _)| *t == kind)
        .map_or(1, |(_, m)| *m)
}

/// Per-type preference: chosen anchors, half-open price range and how many
/// items to retrieve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypePreference {
    pub chosen: Vec<String>,
    pub price_lo: u64,
    pub price_hi: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceQuery {
    pub occasion: Occasion,
    pub types: BTreeMap<ClothingType, TypePreference>,
}

impl PreferenceQuery {
    pub fn preference(&self, kind: ClothingType) -> Result<&TypePreference> {
        self.types
            .get(&kind)
            .ok_or_else(|| Error::Invalid(format!("no preference given for {kind}")))
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        for (&kind, pref) in &self.types {
            if pref.chosen.is_empty() {
                return Err(Error::Invalid(format!("no chosen items for {kind}")));
            }
            if pref.price_lo >= pref.price_hi {
                return Err(Error::Invalid(format!(
                    "empty price range [{}, {}) for {kind}",
                    pref.price_lo, pref.price_hi
                )));
            }
            if pref.count == 0 {
                return Err(Error::Invalid(format!("item count for {kind} must be positive")));
            }
            for id in &pref.chosen {
                let item = catalog.item(id)?;
                if item.kind != kind {
                    return Err(Error::Invalid(format!(
                        "chosen item `{id}` is {} but was given for {kind}",
                        item.kind
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// A catalog with some items hidden from retrieval. Excluding returns a new
/// view; the catalog itself is never touched.
#[derive(Debug, Clone)]
pub struct CatalogView<'a> {
    catalog: &'a Catalog,
    excluded: BTreeSet<String>,
}

impl<'a> CatalogView<'a> {
    pub fn new(catalog: &'a Catalog) -> Self {
        CatalogView {
            catalog,
            excluded: BTreeSet::new(),
        }
    }

    pub fn catalog(&self) -> &'a Catalog {
        self.catalog
    }

    pub fn exclude<I, S>(&self, ids: I) -> CatalogView<'a>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut excluded = self.excluded.clone();
        excluded.extend(ids.into_iter().map(Into::into));
        CatalogView {
            catalog: self.catalog,
            excluded,
        }
    }

    pub fn is_excluded(&self, id: &str) -> bool {
        self.excluded.contains(id)
    }

    pub fn excluded(&self) -> &BTreeSet<String> {
        &self.excluded
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedItem {
    pub id: String,
    pub distance: f64,
}

/// Retrieves up to `count` items of `kind` for `query`, ranked by ascending
/// distance to the closest chosen item of the same category (ties by id).
pub fn rpi(
    view: &CatalogView<'_>,
    features: &FeatureStore,
    query: &PreferenceQuery,
    kind: ClothingType,
) -> Result<Vec<RankedItem>> {
    let catalog = view.catalog();
    let pref = query.preference(kind)?;

    let mut anchors: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for id in &pref.chosen {
        let item = catalog.item(id)?;
        let global = features.features(&item.feature_ref)?.global.as_slice();
        let global = global.ok_or_else(|| Error::Dimension("non-contiguous vector".into()))?;
        anchors.entry(item.category.as_str()).or_default().push(global);
    }

    let mut ranked = Vec::new();
    for (category, category_anchors) in &anchors {
        for id in catalog.partition(kind, category, query.occasion) {
            if view.is_excluded(id) {
                continue;
            }
            let item = catalog.item(id)?;
            if !(pref.price_lo <= item.price && item.price < pref.price_hi) {
                continue;
            }
            let global = features.features(&item.feature_ref)?.global.to_vec();
            let mut best = f64::INFINITY;
            for anchor in category_anchors {
                best = best.min(euclidean_distance(&global, anchor)?);
            }
            ranked.push(RankedItem {
                id: id.clone(),
                distance: best,
            });
        }
    }
    ranked.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    ranked.truncate(pref.count);
    Ok(ranked)
}

/// Filter predicate shared with tests and callers that need the raw pool.
pub fn passes_filter(item: &Item, categories: &BTreeSet<&str>, pref: &TypePreference, occasion: Occasion) -> bool {
    categories.contains(item.category.as_str())
        && pref.price_lo <= item.price
        && item.price < pref.price_hi
        && item.occasion == occasion
}
