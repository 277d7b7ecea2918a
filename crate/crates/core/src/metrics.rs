//! Hit ratio, ROC-AUC and outfit-compatibility evaluation reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::decoder::{binary_score, PairType};
use crate::engine::{aggregate_c1, aggregate_c2, Outfit, PairScorer};
use crate::error::{Error, Result};

/// Fraction of products in a recommended box the user liked.
pub fn hit_ratio(box_products: usize, hits: usize) -> Result<f64> {
    if box_products == 0 {
        return Err(Error::Invalid("hit ratio of an empty box".into()));
    }
    if hits > box_products {
        return Err(Error::Invalid(format!(
            "{hits} hits in a box of {box_products} products"
        )));
    }
    Ok(hits as f64 / box_products as f64)
}

pub fn mean_hit_ratio(hit_ratios: &[f64]) -> Result<f64> {
    if hit_ratios.is_empty() {
        return Err(Error::Invalid("mean hit ratio of no recommendations".into()));
    }
    if let Some(bad) = hit_ratios.iter().find(|h| !(0.0..=1.0).contains(*h)) {
        return Err(Error::Invalid(format!("hit ratio {bad} outside [0, 1]")));
    }
    // Averaging offsets from the first value keeps constant lists exact.
    let base = hit_ratios[0];
    let offset = hit_ratios.iter().map(|h| h - base).sum::<f64>() / hit_ratios.len() as f64;
    Ok(base + offset)
}

/// ROC-AUC via the rank-sum statistic: the probability that a random
/// positive scores above a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("AUC score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Invalid("AUC needs both positive and negative labels".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // Average 1-based ranks over tied groups; ranks are kept doubled so the
    // sum stays an integer.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let doubled_rank = (start + 1 + end) as u128;
        let tied_positives = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        doubled_rank_sum += doubled_rank * tied_positives;
        start = end;
    }
    let (p, n) = (positives as u128, negatives as u128);
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * p * n) as f64)
}

/// Liked/disliked mark for one product of a recommendation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub session: String,
    pub product: String,
    pub liked: bool,
    /// Unix milliseconds.
    pub timestamp: u64,
}

/// Hit ratio of a feedback log, keeping the last mark per product.
pub fn feedback_hit_ratio(box_products: usize, feedback: &[Feedback]) -> Result<f64> {
    let mut last: BTreeMap<&str, bool> = BTreeMap::new();
    for f in feedback {
        last.insert(&f.product, f.liked);
    }
    hit_ratio(box_products, last.values().filter(|&&l| l).count())
}

/// An annotated outfit. `mismatched` lists the items an annotator marked as
/// not fitting; it is only meaningful for negative outfits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledOutfit {
    pub items: Vec<String>,
    pub label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatched: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutfitTestSet {
    pub outfits: Vec<LabeledOutfit>,
}

pub fn load_outfit_testset(path: &Path) -> Result<OutfitTestSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

/// Per-pair labels of an annotated outfit. A positive outfit makes every
/// pair positive. In a negative outfit a pair touching a mismatched item is
/// negative and any other pair stays positive. A negative outfit without
/// mismatch marks has no pair labels.
pub fn derive_pair_labels(outfit: &Outfit, label: bool, mismatched: Option<&[String]>) -> Option<BTreeMap<PairType, bool>> {
    if label {
        return Some(PairType::ALL.iter().map(|&p| (p, true)).collect());
    }
    let marked: BTreeSet<&str> = mismatched?.iter().map(String::as_str).collect();
    if marked.is_empty() {
        return None;
    }
    let mut labels = BTreeMap::new();
    for pair in PairType::ALL {
        let (first, second) = pair.types();
        let a = &outfit.items[type_slot(first)];
        let b = &outfit.items[type_slot(second)];
        labels.insert(pair, !(marked.contains(a.as_str()) || marked.contains(b.as_str())));
    }
    Some(labels)
}

fn type_slot(kind: crate::catalog::ClothingType) -> usize {
    crate::catalog::ClothingType::ALL
        .iter()
        .position(|&t| t == kind)
        .expect("every type has a slot")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsfReport {
    /// Pairwise AUC per pair type; absent when labels are missing or single-class.
    pub pairwise_auc: BTreeMap<PairType, f64>,
    pub ap_auc: Option<f64>,
    pub c1_auc: Option<f64>,
    pub c2_auc: Option<f64>,
    pub accuracy: f64,
    pub outfits: usize,
    pub notices: Vec<String>,
}

/// Scores every outfit of the test set and computes pairwise, AP, C1 and C2
/// AUCs plus C2 accuracy.
pub fn report_osf(testset: &OutfitTestSet, catalog: &Catalog, scorer: &dyn PairScorer) -> Result<OsfReport> {
    if testset.outfits.is_empty() {
        return Err(Error::Invalid("empty outfit test set".into()));
    }
    let mut pair_scores: BTreeMap<PairType, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    let mut c1_scores = Vec::new();
    let mut c2_scores = Vec::new();
    let mut labels = Vec::new();
    let mut unlabelled_pairs = 0;
    let mut correct = 0;

    for labeled in &testset.outfits {
        let ids: Vec<&str> = labeled.items.iter().map(String::as_str).collect();
        let outfit = Outfit::from_ids(&ids, catalog)?;
        let pair_labels = derive_pair_labels(&outfit, labeled.label, labeled.mismatched.as_deref());
        if pair_labels.is_none() {
            unlabelled_pairs += 1;
        }

        let mut binary = Vec::with_capacity(PairType::ALL.len());
        let mut probabilities = Vec::with_capacity(PairType::ALL.len());
        for pair in PairType::ALL {
            let (first, second) = pair.types();
            let a = catalog.item(&outfit.items[type_slot(first)])?;
            let b = catalog.item(&outfit.items[type_slot(second)])?;
            let p = scorer.probabilities(pair, a, b)?;
            binary.push(binary_score(p));
            probabilities.push(p[1]);
            if let Some(pl) = &pair_labels {
                let entry = pair_scores.entry(pair).or_default();
                entry.0.push(p[1]);
                entry.1.push(pl[&pair]);
            }
        }
        let c2 = aggregate_c2(&binary, PairType::ALL.len())?;
        c2_scores.push(f64::from(c2));
        c1_scores.push(aggregate_c1(&probabilities)?);
        labels.push(labeled.label);
        if (c2 == 1) == labeled.label {
            correct += 1;
        }
    }

    let mut notices = Vec::new();
    if unlabelled_pairs > 0 {
        notices.push(format!(
            "{unlabelled_pairs} negative outfits carry no mismatch marks; their pairs are left out of pairwise AUC"
        ));
    }
    let mut pairwise_auc = BTreeMap::new();
    for pair in PairType::ALL {
        match pair_scores.get(&pair).map(|(s, l)| auc(s, l)) {
            Some(Ok(value)) => {
                pairwise_auc.insert(pair, value);
            }
            _ => notices.push(format!("pairwise AUC for {pair} skipped: labels missing or single-class")),
        }
    }
    let ap_auc = (pairwise_auc.len() == PairType::ALL.len())
        .then(|| pairwise_auc.values().sum::<f64>() / pairwise_auc.len() as f64);

    let outfit_auc = |scores: &[f64], what: &str, notices: &mut Vec<String>| match auc(scores, &labels) {
        Ok(v) => Some(v),
        Err(_) => {
            notices.push(format!("{what} AUC skipped: outfit labels are single-class"));
            None
        }
    };
    let c1_auc = outfit_auc(&c1_scores, "C1", &mut notices);
    let c2_auc = outfit_auc(&c2_scores, "C2", &mut notices);

    Ok(OsfReport {
        pairwise_auc,
        ap_auc,
        c1_auc,
        c2_auc,
        accuracy: correct as f64 / labels.len() as f64,
        outfits: labels.len(),
        notices,
    })
}
