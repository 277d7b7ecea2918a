//! Deterministic reference encoder over synthetic patch images, plus demo
//! catalog and hue-match pair generators.
//!
//! An item image is a 3x3 grid of patches of RGB pixels. Most patches carry
//! the item's dominant hue; a few accent patches carry other hues. The encoder
//! turns each patch into a 16-channel vector (a 12-bin saturation-weighted
//! hue histogram and four brightness statistics) and averages the patches
//! into the global retrieval vector.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{CatalogConfig, ClothingType, Item, Occasion};
use crate::decoder::PairType;
use crate::error::{Error, Result};
use crate::features::{FeatureFile, FeatureRecord, FeatureShape};
use crate::metrics::{LabeledOutfit, OutfitTestSet};
use crate::training::PairDataset;

pub const HUES: [&str; 6] = ["red", "yellow", "green", "cyan", "blue", "magenta"];
pub const GRID: usize = 3;
pub const LOCATIONS: usize = GRID * GRID;
pub const PATCH_PIXELS: usize = 16;
pub const HUE_BINS: usize = 12;
pub const CHANNELS: usize = HUE_BINS + 4;

pub const SHAPE: FeatureShape = FeatureShape {
    global_dim: CHANNELS,
    locations: LOCATIONS,
    channels: CHANNELS,
};

/// Pixels per patch, row-major over the grid; channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchImage {
    pub patches: Vec<Vec<[f64; 3]>>,
}

fn hsv_to_rgb(hue_deg: f64, s: f64, v: f64) -> [f64; 3] {
    let h = hue_deg.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Hue in degrees, saturation and value of an RGB pixel.
fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    (hue, sat, max)
}

/// Hue angle of a named hue index.
pub fn hue_angle(hue: usize) -> f64 {
    360.0 * hue as f64 / HUES.len() as f64
}

/// Renders an image whose dominant hue is `hue`; up to three patches get a
/// different accent hue.
pub fn render<R: Rng>(hue: usize, rng: &mut R) -> PatchImage {
    let accents = rng.gen_range(0..=3);
    let mut slots: Vec<usize> = (0..LOCATIONS).collect();
    slots.shuffle(rng);
    let accent_slots: BTreeSet<usize> = slots[..accents].iter().copied().collect();
    let patches = (0..LOCATIONS)
        .map(|slot| {
            let patch_hue = if accent_slots.contains(&slot) {
                let offset = rng.gen_range(1..HUES.len());
                (hue + offset) % HUES.len()
            } else {
                hue
            };
            let center = hue_angle(patch_hue) + rng.gen_range(-12.0..12.0);
            let sat: f64 = rng.gen_range(0.55..1.0);
            let val: f64 = rng.gen_range(0.45..1.0);
            (0..PATCH_PIXELS)
                .map(|_| {
                    hsv_to_rgb(
                        center + rng.gen_range(-6.0..6.0),
                        (sat + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0),
                        (val + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0),
                    )
                })
                .collect()
        })
        .collect();
    PatchImage { patches }
}

/// Feature vector of one patch.
pub fn encode_patch(pixels: &[[f64; 3]]) -> [f64; CHANNELS] {
    let mut out = [0.0; CHANNELS];
    if pixels.is_empty() {
        return out;
    }
    let n = pixels.len() as f64;
    let mut values = Vec::with_capacity(pixels.len());
    let mut sat_sum = 0.0;
    for &px in pixels {
        let (hue, sat, val) = rgb_to_hsv(px);
        // Soft assignment between the two nearest bin centres.
        let pos = hue / (360.0 / HUE_BINS as f64);
        let lower = pos.floor() as usize % HUE_BINS;
        let frac = pos - pos.floor();
        out[lower] += sat * (1.0 - frac) / n;
        out[(lower + 1) % HUE_BINS] += sat * frac / n;
        values.push(val);
        sat_sum += sat;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    out[HUE_BINS] = mean;
    out[HUE_BINS + 1] = sat_sum / n;
    out[HUE_BINS + 2] = var.sqrt();
    out[HUE_BINS + 3] = values.iter().filter(|&&v| v > 0.8).count() as f64 / n;
    out
}

/// Feature record of an image: the per-patch map and its mean as the global vector.
pub fn encode(id: &str, image: &PatchImage) -> Result<FeatureRecord> {
    if image.patches.len() != LOCATIONS {
        return Err(Error::Dimension(format!(
            "image has {} patches, expected {LOCATIONS}",
            image.patches.len()
        )));
    }
    let mut map = Vec::with_capacity(LOCATIONS * CHANNELS);
    let mut global = vec![0.0; CHANNELS];
    for patch in &image.patches {
        let f = encode_patch(patch);
        for (g, v) in global.iter_mut().zip(f) {
            *g += v / LOCATIONS as f64;
        }
        map.extend(f);
    }
    Ok(FeatureRecord {
        id: id.to_string(),
        global,
        map,
    })
}

/// Items with their features and generating hue.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub items: Vec<Item>,
    pub features: FeatureFile,
    pub hues: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoConfig {
    /// Items per (type, category, occasion) partition.
    pub per_partition: usize,
    /// Whether titles name the item's hue.
    pub hue_in_title: bool,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            per_partition: 6,
            hue_in_title: true,
            seed: 7,
        }
    }
}

const MATERIALS: [&str; 4] = ["cotton", "linen", "denim", "leather"];

fn price_range(kind: ClothingType) -> std::ops::Range<u64> {
    match kind {
        ClothingType::TopWear => 300..2500,
        ClothingType::BottomWear => 500..3000,
        ClothingType::FootWear => 800..4000,
    }
}

/// A catalog covering every configured category for both occasions.
pub fn demo_catalog(config: &DemoConfig, categories: &CatalogConfig) -> Result<SyntheticData> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut items = Vec::new();
    let mut records = Vec::new();
    let mut hues = BTreeMap::new();
    for (&kind, names) in &categories.categories {
        for category in names {
            for occasion in [Occasion::Formal, Occasion::Casual] {
                for k in 0..config.per_partition {
                    let id = format!(
                        "{}-{}-{}-{k:02}",
                        kind.short(),
                        category.replace(|c: char| !c.is_alphanumeric(), ""),
                        occasion.to_string().chars().next().unwrap_or('x')
                    );
                    let hue = rng.gen_range(0..HUES.len());
                    let material = MATERIALS[rng.gen_range(0..MATERIALS.len())];
                    let title = if config.hue_in_title {
                        format!("{} {material} {category}", HUES[hue])
                    } else {
                        format!("{material} {category}")
                    };
                    let price = rng.gen_range(price_range(kind));
                    records.push(encode(&id, &render(hue, &mut rng))?);
                    hues.insert(id.clone(), hue);
                    items.push(Item::new(id, kind, category.clone(), occasion, price, title));
                }
            }
        }
    }
    Ok(SyntheticData {
        items,
        features: FeatureFile {
            shape: SHAPE,
            records,
        },
        hues,
    })
}

/// Two-type item pool for one pair type, with hue-free titles.
pub fn pair_pool(pair: PairType, per_type: usize, seed: u64) -> Result<SyntheticData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = CatalogConfig::default();
    let (first, second) = pair.types();
    let mut items = Vec::new();
    let mut records = Vec::new();
    let mut hues = BTreeMap::new();
    for kind in [first, second] {
        let categories: Vec<&String> = config.categories[&kind].iter().collect();
        for k in 0..per_type {
            let id = format!("{}{k:03}", kind.short());
            let hue = k % HUES.len();
            let category = categories[rng.gen_range(0..categories.len())];
            let material = MATERIALS[rng.gen_range(0..MATERIALS.len())];
            let price = rng.gen_range(price_range(kind));
            records.push(encode(&id, &render(hue, &mut rng))?);
            hues.insert(id.clone(), hue);
            items.push(Item::new(
                id,
                kind,
                category.clone(),
                Occasion::Casual,
                price,
                format!("{material} {category}"),
            ));
        }
    }
    Ok(SyntheticData {
        items,
        features: FeatureFile {
            shape: SHAPE,
            records,
        },
        hues,
    })
}

/// Distinct pairs labelled by hue equality: `positives` matching pairs and
/// `negatives` non-matching ones.
pub fn hue_pairs(
    pair: PairType,
    data: &SyntheticData,
    positives: usize,
    negatives: usize,
    seed: u64,
) -> Result<PairDataset> {
    let (first, second) = pair.types();
    let of_kind = |kind| -> Vec<&Item> { data.items.iter().filter(|i| i.kind == kind).collect() };
    let (left, right) = (of_kind(first), of_kind(second));
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for a in &left {
        for b in &right {
            let pair = (a.id.clone(), b.id.clone());
            if data.hues[&a.id] == data.hues[&b.id] {
                pos.push(pair);
            } else {
                neg.push(pair);
            }
        }
    }
    if pos.len() < positives || neg.len() < negatives {
        return Err(Error::Invalid(format!(
            "pool yields {} matching and {} non-matching pairs; {positives}/{negatives} requested",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    pos.truncate(positives);
    neg.truncate(negatives);
    Ok(PairDataset {
        positives: pos,
        negatives: neg,
    })
}

/// Like [`hue_pairs`] with equal class sizes, capped at `limit` per class
/// and at what the pool can supply.
pub fn balanced_hue_pairs(pair: PairType, data: &SyntheticData, limit: usize, seed: u64) -> Result<PairDataset> {
    let (first, second) = pair.types();
    let hues_of = |kind| -> Vec<usize> {
        data.items
            .iter()
            .filter(|i| i.kind == kind)
            .map(|i| data.hues[&i.id])
            .collect()
    };
    let (left, right) = (hues_of(first), hues_of(second));
    let matching = left
        .iter()
        .map(|h| right.iter().filter(|g| *g == h).count())
        .sum::<usize>();
    let other = left.len() * right.len() - matching;
    let n = limit.min(matching).min(other);
    if n == 0 {
        return Err(Error::Invalid(format!("no {pair} pairs of both classes in the pool")));
    }
    hue_pairs(pair, data, n, n, seed)
}

/// Outfits labelled by the hue rule: positive when all three items share a
/// hue. In a negative outfit the odd item out is marked as the mismatch, or
/// every item when all three hues differ.
pub fn hue_outfit_testset(data: &SyntheticData, per_class: usize, seed: u64) -> Result<OutfitTestSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: Vec<Vec<&Item>> = ClothingType::ALL
        .iter()
        .map(|&kind| data.items.iter().filter(|i| i.kind == kind).collect())
        .collect();
    if pools.iter().any(Vec::is_empty) {
        return Err(Error::Invalid("every clothing type needs items".into()));
    }
    let mut seen = BTreeSet::new();
    let (mut positives, mut negatives) = (Vec::new(), Vec::new());
    let attempts = 200 * per_class.max(1);
    for _ in 0..attempts {
        if positives.len() == per_class && negatives.len() == per_class {
            break;
        }
        let top = pools[0][rng.gen_range(0..pools[0].len())];
        let hue = data.hues[&top.id];
        // Draw matching items half of the time so positives are not rare.
        let pick = |pool: &Vec<&Item>, rng: &mut ChaCha8Rng| -> String {
            let same: Vec<&&Item> = pool.iter().filter(|i| data.hues[&i.id] == hue).collect();
            if rng.gen_bool(0.5) && !same.is_empty() {
                same[rng.gen_range(0..same.len())].id.clone()
            } else {
                pool[rng.gen_range(0..pool.len())].id.clone()
            }
        };
        let bottom = pick(&pools[1], &mut rng);
        let foot = pick(&pools[2], &mut rng);
        let items = vec![top.id.clone(), bottom, foot];
        if !seen.insert(items.clone()) {
            continue;
        }
        let hues: Vec<usize> = items.iter().map(|id| data.hues[id]).collect();
        if hues[0] == hues[1] && hues[1] == hues[2] {
            if positives.len() < per_class {
                positives.push(LabeledOutfit {
                    items,
                    label: true,
                    mismatched: None,
                });
            }
        } else if negatives.len() < per_class {
            let odd: Vec<String> = (0..3)
                .filter(|&k| hues.iter().filter(|&&h| h == hues[k]).count() == 1)
                .map(|k| items[k].clone())
                .collect();
            negatives.push(LabeledOutfit {
                items,
                label: false,
                mismatched: Some(odd),
            });
        }
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Invalid("pool cannot supply both outfit classes".into()));
    }
    positives.extend(negatives);
    Ok(OutfitTestSet { outfits: positives })
}
