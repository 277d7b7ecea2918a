use std::collections::{BTreeMap, BTreeSet};

use boxrec_core::catalog::{Catalog, CatalogConfig, ClothingType, Item, Occasion};
use boxrec_core::decoder::PairType;
use boxrec_core::engine::{
    generate_preferred_outfits, score_outfit, to_instance, AllPassScorer, FnScorer, Outfit,
};
use boxrec_core::features::{FeatureRecord, FeatureShape, FeatureStore};
use boxrec_core::retrieval::{PreferenceQuery, TypePreference};
use boxrec_core::solver::olr_solve;

/// Casual items under 1K: t00..t29, b0..b5, f0..f3. Retrieval distance grows
/// with the index, and each type's item 0 is the user's pick.
struct Shop {
    catalog: Catalog,
    features: FeatureStore,
}

fn shop() -> Shop {
    let mut items = Vec::new();
    let mut records = Vec::new();
    let mut add = |id: String, kind, category: &str, x: f64, price| {
        items.push(Item::new(id.clone(), kind, category, Occasion::Casual, price, category));
        records.push(FeatureRecord {
            id,
            global: vec![x, 0.0],
            map: vec![x],
        });
    };
    for k in 0..30 {
        add(format!("t{k:02}"), ClothingType::TopWear, "shirt", k as f64, 400 + k as u64);
    }
    for k in 0..6 {
        add(format!("b{k}"), ClothingType::BottomWear, "jeans", k as f64, 500 + k as u64);
    }
    for k in 0..4 {
        add(format!("f{k}"), ClothingType::FootWear, "trainer", k as f64, 600 + k as u64);
    }
    // Noise the filters must drop.
    add("tx-formal".into(), ClothingType::TopWear, "shirt", 0.0, 100);
    add("tx-pricey".into(), ClothingType::TopWear, "shirt", 0.0, 1000);
    let shape = FeatureShape {
        global_dim: 2,
        locations: 1,
        channels: 1,
    };
    let mut catalog_items = items;
    catalog_items
        .iter_mut()
        .filter(|i| i.id == "tx-formal")
        .for_each(|i| i.occasion = Occasion::Formal);
    Shop {
        catalog: Catalog::from_items(catalog_items, &CatalogConfig::default()).unwrap(),
        features: FeatureStore::from_records(shape, records).unwrap(),
    }
}

fn query() -> PreferenceQuery {
    let pref = |id: &str, count| TypePreference {
        chosen: vec![id.to_string()],
        price_lo: 0,
        price_hi: 1000,
        count,
    };
    let mut types = BTreeMap::new();
    types.insert(ClothingType::TopWear, pref("t00", 15));
    types.insert(ClothingType::BottomWear, pref("b0", 3));
    types.insert(ClothingType::FootWear, pref("f0", 2));
    PreferenceQuery {
        occasion: Occasion::Casual,
        types,
    }
}

#[test]
fn one_round_enumerates_ninety_combinations() {
    let s = shop();
    let set = generate_preferred_outfits(&s.catalog, &s.features, &AllPassScorer, &query(), 90).unwrap();
    assert!(set.complete);
    assert_eq!(set.rounds.len(), 1);
    assert_eq!(set.rounds[0].retrieved, [15, 3, 2]);
    assert_eq!(set.rounds[0].combinations, 90);
    assert_eq!(set.rounds[0].checked, 90);
    let distinct: BTreeSet<&Outfit> = set.outfits.iter().map(|o| &o.outfit).collect();
    assert_eq!(distinct.len(), 90);
    for o in &set.outfits {
        assert!(!o.outfit.items.iter().any(|id| id.starts_with("tx")));
    }
}

#[test]
fn sixty_then_fifty_walkthrough() {
    let s = shop();
    let mut rejected: BTreeSet<(String, String)> = BTreeSet::new();
    // Round one: every combination with the third bottom fails.
    for k in 0..15 {
        rejected.insert((format!("t{k:02}"), "b2".into()));
    }
    // Round two: 20 failures among the first 48 combinations.
    for k in 15..23 {
        rejected.insert((format!("t{k:02}"), "b5".into()));
    }
    for k in 15..17 {
        rejected.insert((format!("t{k:02}"), "b4".into()));
    }
    let scorer = FnScorer(move |pair: PairType, a: &Item, b: &Item| {
        if pair == PairType::TopBottom && rejected.contains(&(a.id.clone(), b.id.clone())) {
            [0.9, 0.1]
        } else {
            [0.2, 0.8]
        }
    });
    let set = generate_preferred_outfits(&s.catalog, &s.features, &scorer, &query(), 90).unwrap();
    assert!(set.complete);
    assert_eq!(set.outfits.len(), 90);
    assert_eq!(set.rounds.len(), 2);
    assert_eq!((set.rounds[0].combinations, set.rounds[0].checked, set.rounds[0].admitted), (90, 90, 60));
    assert_eq!((set.rounds[1].combinations, set.rounds[1].checked, set.rounds[1].admitted), (90, 50, 30));
    // Second round draws only unseen items.
    let last = &set.outfits[89].outfit.items;
    assert_eq!(last, &["t23", "b3", "f3"]);
}

#[test]
fn early_stop_keeps_lexicographic_prefix() {
    let s = shop();
    let set = generate_preferred_outfits(&s.catalog, &s.features, &AllPassScorer, &query(), 5).unwrap();
    let got: Vec<Vec<String>> = set.outfits.iter().map(|o| o.outfit.items.clone()).collect();
    let expect = [
        ["t00", "b0", "f0"],
        ["t00", "b0", "f1"],
        ["t00", "b1", "f0"],
        ["t00", "b1", "f1"],
        ["t00", "b2", "f0"],
    ];
    assert_eq!(got, expect);
    assert_eq!(set.rounds[0].checked, 5);
}

#[test]
fn exhausted_pool_returns_partial_result() {
    let s = shop();
    let set = generate_preferred_outfits(&s.catalog, &s.features, &AllPassScorer, &query(), 1000).unwrap();
    assert!(!set.complete);
    assert_eq!(set.rounds.len(), 2);
    assert_eq!(set.outfits.len(), 180);

    let nothing = FnScorer(|_: PairType, _: &Item, _: &Item| [0.7, 0.3]);
    let set = generate_preferred_outfits(&s.catalog, &s.features, &nothing, &query(), 10).unwrap();
    assert!(!set.complete);
    assert!(set.outfits.is_empty());
}

#[test]
fn every_admitted_outfit_scores_one() {
    let s = shop();
    let scorer = FnScorer(|_: PairType, a: &Item, b: &Item| {
        if (a.price + b.price).is_multiple_of(3) {
            [0.6, 0.4]
        } else {
            [0.4, 0.6]
        }
    });
    let set = generate_preferred_outfits(&s.catalog, &s.features, &scorer, &query(), 40).unwrap();
    for o in &set.outfits {
        assert_eq!(score_outfit(&o.outfit, &s.catalog, &scorer).unwrap().c2, 1);
    }
}

#[test]
fn single_bad_pair_separates_c2_from_c1() {
    let s = shop();
    let outfit = Outfit::from_ids(&["t01", "b1", "f1"], &s.catalog).unwrap();
    for bad in PairType::ALL {
        let scorer = FnScorer(move |pair: PairType, _: &Item, _: &Item| {
            if pair == bad {
                [0.9, 0.1]
            } else {
                [0.1, 0.9]
            }
        });
        let score = score_outfit(&outfit, &s.catalog, &scorer).unwrap();
        assert_eq!(score.c2, 0);
        assert!(score.c1 > 0.5);
        assert!((score.c1 - 1.9 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn engine_boxes_hold_three_items_per_outfit() {
    let s = shop();
    let set = generate_preferred_outfits(&s.catalog, &s.features, &AllPassScorer, &query(), 90).unwrap();
    for budget in [1_500, 3_000, 6_000, 20_000] {
        let inst = to_instance(&set.outfits, &s.catalog, budget).unwrap();
        let sol = olr_solve(&inst).unwrap();
        assert_eq!(sol.chosen.card, 3 * sol.chosen.outfits.len());
        assert!(sol.chosen.total_price <= budget);
    }
}
