//! Outfit scoring and generation of the preferred-outfit set.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ClothingType, Item};
use crate::decoder::{binary_score, HyperParams, PairType};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::retrieval::{rpi, CatalogView, PreferenceQuery};
use crate::solver::{Instance, PricedItem};
use crate::training::{pair_probabilities, Checkpoint, DecoderSet};

pub const DEFAULT_OUTFIT_TARGET: usize = 90;

/// Source of pairwise compatibility probabilities. `a` always has the first
/// type of `pair`.
pub trait PairScorer: Send + Sync {
    fn probabilities(&self, pair: PairType, a: &Item, b: &Item) -> Result<[f64; 2]>;
}

impl<T: PairScorer + ?Sized> PairScorer for Arc<T> {
    fn probabilities(&self, pair: PairType, a: &Item, b: &Item) -> Result<[f64; 2]> {
        (**self).probabilities(pair, a, b)
    }
}

impl<T: PairScorer + ?Sized> PairScorer for &T {
    fn probabilities(&self, pair: PairType, a: &Item, b: &Item) -> Result<[f64; 2]> {
        (**self).probabilities(pair, a, b)
    }
}

/// Trained decoders bound to the feature store they read from.
#[derive(Debug, Clone)]
pub struct ModelScorer {
    pub decoders: DecoderSet,
    pub hyper: HyperParams,
    pub catalog: Arc<Catalog>,
    pub features: Arc<FeatureStore>,
}

impl ModelScorer {
    pub fn new(checkpoint: Checkpoint, catalog: Arc<Catalog>, features: Arc<FeatureStore>) -> Result<Self> {
        checkpoint.check_vocabulary(catalog.vocabulary())?;
        Ok(ModelScorer {
            decoders: checkpoint.decoders,
            hyper: checkpoint.hyper,
            catalog,
            features,
        })
    }
}

impl PairScorer for ModelScorer {
    fn probabilities(&self, pair: PairType, a: &Item, b: &Item) -> Result<[f64; 2]> {
        let params = self.decoders.get(pair)?;
        pair_probabilities(params, pair, a, b, &self.features, self.catalog.vocabulary(), &self.hyper)
    }
}

/// Accepts every pair with the given confidence.
#[derive(Debug, Clone, Copy)]
pub struct AllPassScorer;

impl PairScorer for AllPassScorer {
    fn probabilities(&self, _: PairType, _: &Item, _: &Item) -> Result<[f64; 2]> {
        Ok([0.0, 1.0])
    }
}

/// Scorer backed by a closure, for scripted stubs.
pub struct FnScorer<F>(pub F);

impl<F> PairScorer for FnScorer<F>
where
    F: Fn(PairType, &Item, &Item) -> [f64; 2] + Send + Sync,
{
    fn probabilities(&self, pair: PairType, a: &Item, b: &Item) -> Result<[f64; 2]> {
        Ok((self.0)(pair, a, b))
    }
}

/// Logical AND over the pair scores; expects one score per type pair.
pub fn aggregate_c2(scores: &[u8], expected_pairs: usize) -> Result<u8> {
    if scores.len() != expected_pairs {
        return Err(Error::Invalid(format!(
            "expected {expected_pairs} pair scores, got {}",
            scores.len()
        )));
    }
    Ok(u8::from(scores.iter().all(|&s| s == 1)))
}

/// Mean of the pair probabilities `p(r = 1)`.
pub fn aggregate_c1(probabilities: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::Invalid("no pair probabilities to aggregate".into()));
    }
    Ok(probabilities.iter().sum::<f64>() / probabilities.len() as f64)
}

/// One item per clothing type, stored in [`ClothingType::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Outfit {
    pub items: Vec<String>,
}

impl Outfit {
    /// Orders the given items by clothing type; each type must appear once.
    pub fn from_items(items: &[&Item]) -> Result<Self> {
        let mut ordered = Vec::with_capacity(ClothingType::ALL.len());
        for kind in ClothingType::ALL {
            let mut of_kind = items.iter().filter(|i| i.kind == kind);
            let item = of_kind
                .next()
                .ok_or_else(|| Error::Invalid(format!("outfit has no {kind} item")))?;
            if of_kind.next().is_some() {
                return Err(Error::Invalid(format!("outfit has more than one {kind} item")));
            }
            ordered.push(item.id.clone());
        }
        if items.len() != ordered.len() {
            return Err(Error::Invalid("outfit items must have distinct types".into()));
        }
        Ok(Outfit { items: ordered })
    }

    pub fn from_ids(ids: &[&str], catalog: &Catalog) -> Result<Self> {
        let items = ids.iter().map(|id| catalog.item(id)).collect::<Result<Vec<_>>>()?;
        Self::from_items(&items)
    }

    pub fn price(&self, catalog: &Catalog) -> Result<u64> {
        self.items.iter().map(|id| Ok(catalog.item(id)?.price)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub pair: PairType,
    pub a: String,
    pub b: String,
    /// Probability of compatibility, `p(r = 1)`.
    pub probability: f64,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutfitScore {
    pub c2: u8,
    pub c1: f64,
    pub pairs: Vec<PairScore>,
}

/// Scores every type pair of an outfit with its decoder and aggregates.
pub fn score_outfit(outfit: &Outfit, catalog: &Catalog, scorer: &dyn PairScorer) -> Result<OutfitScore> {
    let items = outfit
        .items
        .iter()
        .map(|id| catalog.item(id))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::with_capacity(PairType::ALL.len());
    for pair in PairType::ALL {
        let (first, second) = pair.types();
        let find = |kind| {
            items
                .iter()
                .find(|i| i.kind == kind)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("outfit has no {kind} item")))
        };
        let (a, b) = (find(first)?, find(second)?);
        let p = scorer.probabilities(pair, a, b)?;
        pairs.push(PairScore {
            pair,
            a: a.id.clone(),
            b: b.id.clone(),
            probability: p[1],
            score: binary_score(p),
        });
    }
    let scores: Vec<u8> = pairs.iter().map(|p| p.score).collect();
    let probabilities: Vec<f64> = pairs.iter().map(|p| p.probability).collect();
    Ok(OutfitScore {
        c2: aggregate_c2(&scores, PairType::ALL.len())?,
        c1: aggregate_c1(&probabilities)?,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredOutfit {
    pub outfit: Outfit,
    pub score: OutfitScore,
}

/// Per-round bookkeeping of the generation loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// Retrieved item count per type, in [`ClothingType::ALL`] order.
    pub retrieved: Vec<usize>,
    pub combinations: usize,
    pub checked: usize,
    pub admitted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferredOutfitSet {
    pub outfits: Vec<ScoredOutfit>,
    /// True when the target outfit count was reached.
    pub complete: bool,
    pub rounds: Vec<RoundTrace>,
}

/// Repeatedly retrieves preferred items per type, checks their cartesian
/// product in rank order and admits compatible outfits until `target` are
/// found. Items retrieved in one round are excluded from the next. Stops with
/// `complete = false` once some type has no candidates left.
pub fn generate_preferred_outfits(
    catalog: &Catalog,
    features: &FeatureStore,
    scorer: &dyn PairScorer,
    query: &PreferenceQuery,
    target: usize,
) -> Result<PreferredOutfitSet> {
    if target == 0 {
        return Err(Error::Invalid("target outfit count must be at least 1".into()));
    }
    query.validate(catalog)?;
    let mut view = CatalogView::new(catalog);
    let mut result = PreferredOutfitSet {
        outfits: Vec::new(),
        complete: false,
        rounds: Vec::new(),
    };
    let mut seen = BTreeSet::new();

    loop {
        let mut retrieved: Vec<Vec<String>> = Vec::with_capacity(ClothingType::ALL.len());
        for kind in ClothingType::ALL {
            let ranked = rpi(&view, features, query, kind)?;
            retrieved.push(ranked.into_iter().map(|r| r.id).collect());
        }
        if retrieved.iter().any(Vec::is_empty) {
            return Ok(result);
        }

        let combinations: usize = retrieved.iter().map(Vec::len).product();
        let mut trace = RoundTrace {
            retrieved: retrieved.iter().map(Vec::len).collect(),
            combinations,
            checked: 0,
            admitted: 0,
        };
        for ids in lexicographic_product(&retrieved) {
            trace.checked += 1;
            let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
            let outfit = Outfit::from_ids(&id_refs, catalog)?;
            let score = score_outfit(&outfit, catalog, scorer)?;
            if score.c2 == 1 {
                if !seen.insert(outfit.clone()) {
                    return Err(Error::Invalid(format!(
                        "outfit {:?} generated twice",
                        outfit.items
                    )));
                }
                result.outfits.push(ScoredOutfit { outfit, score });
                trace.admitted += 1;
                if result.outfits.len() == target {
                    result.complete = true;
                    result.rounds.push(trace);
                    return Ok(result);
                }
            }
        }
        result.rounds.push(trace);
        view = view.exclude(retrieved.into_iter().flatten());
    }
}

/// Packing instance over the generated outfits; outfit `j` of the instance
/// is `outfits[j]`.
pub fn to_instance(outfits: &[ScoredOutfit], catalog: &Catalog, budget: u64) -> Result<Instance> {
    let mut items = BTreeSet::new();
    for o in outfits {
        items.extend(o.outfit.items.iter().cloned());
    }
    let priced = items
        .into_iter()
        .map(|id| {
            let price = catalog.item(&id)?.price;
            Ok(PricedItem { id, price })
        })
        .collect::<Result<Vec<_>>>()?;
    let sets = outfits.iter().map(|o| o.outfit.items.clone()).collect();
    Instance::new(priced, sets, budget)
}

/// Cartesian product with the last list varying fastest.
fn lexicographic_product(lists: &[Vec<String>]) -> impl Iterator<Item = Vec<String>> + '_ {
    let total: usize = lists.iter().map(Vec::len).product();
    (0..total).map(move |mut flat| {
        let mut picks = vec![String::new(); lists.len()];
        for (slot, list) in picks.iter_mut().zip(lists).rev() {
            *slot = list[flat % list.len()].clone();
            flat /= list.len();
        }
        picks
    })
}
