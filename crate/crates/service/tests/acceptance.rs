//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every check recomputes its expectations independently of the
//! code under test.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use boxrec_core::catalog::{Catalog, CatalogConfig, ClothingType, Item, Occasion};
use boxrec_core::decoder::{loss_total, loss_value, DecoderParams, Example, HyperParams, PairInput, PairType};
use boxrec_core::engine::{generate_preferred_outfits, score_outfit, to_instance, AllPassScorer, FnScorer, Outfit};
use boxrec_core::features::{FeatureRecord, FeatureShape, FeatureStore};
use boxrec_core::metrics::{auc, hit_ratio, mean_hit_ratio};
use boxrec_core::retrieval::{PreferenceQuery, TypePreference};
use boxrec_core::solver::{decantate, olr_solve, DecantStage, Instance, PricedItem};
use boxrec_core::synthetic::{hue_pairs, pair_pool};
use boxrec_core::training::{train_decoder, TrainedDecoder};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = fn() -> Result<String>;

fn main() {
    let checks: [(&str, Check); 10] = [
        ("example-1 golden trace", example_one),
        ("oracle suite", oracle_suite),
        ("notation calculus", notation_calculus),
        ("decoder gradient check", gradient_check),
        ("synthetic-rule training", synthetic_training),
        ("c2 vs c1 construction", c2_versus_c1),
        ("combination count and walkthrough", combination_count),
        ("metrics exactness", metrics_exactness),
        ("runtime scaling", runtime_scaling),
        ("end-to-end via cli", end_to_end),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(anyhow::anyhow!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.2}s]"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e:#} [{secs:.2}s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(started: Instant, limit: Duration, what: &str) -> Result<()> {
    let took = started.elapsed();
    ensure!(took < limit, "{what} took {took:?}, limit {limit:?}");
    Ok(())
}

// ---------------------------------------------------------------- packing

fn instance(prices: &[u64], outfits: &[Vec<usize>], budget: u64) -> Instance {
    // zero-padded ids keep catalog order equal to index order
    let items = prices
        .iter()
        .enumerate()
        .map(|(i, &price)| PricedItem {
            id: format!("x{i:03}"),
            price,
        })
        .collect();
    let sets = outfits
        .iter()
        .map(|o| o.iter().map(|i| format!("x{i:03}")).collect())
        .collect();
    Instance::new(items, sets, budget).unwrap()
}

fn example_one() -> Result<String> {
    let started = Instant::now();
    let outfits = vec![vec![0, 1, 2], vec![1, 2, 3], vec![2, 3, 4], vec![5, 6, 7, 8]];
    let inst = instance(&[1; 9], &outfits, 5);
    let trace = decantate(&inst, vec![vec![0], vec![1], vec![2, 3]])?;
    let got: Vec<(DecantStage, Vec<Vec<usize>>)> = trace.into_iter().map(|s| (s.stage, s.collection)).collect();
    let expect = vec![
        (DecantStage::Boxes, vec![vec![0, 1], vec![2, 3]]),
        (DecantStage::Components, vec![vec![0, 1], vec![2, 3]]),
        (DecantStage::Outfits, vec![vec![0, 1, 2], vec![3]]),
    ];
    ensure!(got == expect, "stages {got:?}");
    let sol = olr_solve(&inst)?;
    ensure!(sol.chosen.outfits == [0, 1, 2], "chosen {:?}", sol.chosen.outfits);
    ensure!(sol.chosen.total_price == 5, "T = {}", sol.chosen.total_price);
    within(started, Duration::from_secs(1), "example 1")?;
    Ok("stages {s1,s2}{s3,s4} | {s1,s2}{s3,s4} | {s1,s2,s3}{s4}; box {s1,s2,s3}, T=5".into())
}

struct Random {
    prices: Vec<u64>,
    outfits: Vec<Vec<usize>>,
    budget: u64,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Random {
    let n = rng.gen_range(1..=12);
    let prices = (0..n).map(|_| rng.gen_range(1..=5)).collect();
    let count = rng.gen_range(1..=8);
    let outfits = (0..count)
        .map(|_| {
            let size = rng.gen_range(1..=n.min(4));
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let mut o = idx[..size].to_vec();
            o.sort_unstable();
            o
        })
        .collect();
    Random {
        prices,
        outfits,
        budget: rng.gen_range(1..=15),
    }
}

fn union_price(r: &Random, chosen: &[usize]) -> u64 {
    let items: BTreeSet<usize> = chosen.iter().flat_map(|&j| r.outfits[j].iter().copied()).collect();
    items.iter().map(|&x| r.prices[x]).sum()
}

fn oracle_max(r: &Random) -> usize {
    let n = r.outfits.len();
    (0u32..1 << n)
        .filter(|mask| {
            let chosen: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            union_price(r, &chosen) <= r.budget
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

fn oracle_suite() -> Result<String> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ratio_sum, mut optimal) = (0.0, 0);
    const RUNS: usize = 500;
    for run in 0..RUNS {
        let r = random_instance(&mut rng);
        let sol = olr_solve(&instance(&r.prices, &r.outfits, r.budget))?;
        let got = sol.chosen.outfits.len();
        ensure!(union_price(&r, &sol.chosen.outfits) <= r.budget, "instance {run}: over budget");
        let best = oracle_max(&r);
        ensure!(got <= best, "instance {run}: {got} outfits beats the optimum {best}");
        ratio_sum += if best == 0 { 1.0 } else { got as f64 / best as f64 };
        optimal += usize::from(got == best);
    }
    within(started, Duration::from_secs(30), "oracle suite")?;
    Ok(format!(
        "{RUNS} instances, all feasible, none above optimum; mean optimality ratio {:.4}, optimal on {optimal}",
        ratio_sum / RUNS as f64
    ))
}

fn notation_calculus() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..1000 {
        let r = random_instance(&mut rng);
        let inst = instance(&r.prices, &r.outfits, r.budget);
        let boxed: Vec<usize> = (0..r.outfits.len()).filter(|_| rng.gen_bool(0.5)).collect();
        let mu = |x: usize, within: &[usize]| within.iter().filter(|&&j| r.outfits[j].contains(&x)).count();
        for x in 0..r.prices.len() {
            ensure!(inst.multiplicity(&boxed, x) == mu(x, &boxed), "case {case}: multiplicity of {x}");
        }
        for j in 0..r.outfits.len() {
            let mut with_j = boxed.clone();
            if !with_j.contains(&j) {
                with_j.push(j);
            }
            let direct: f64 = r.outfits[j].iter().map(|&x| 1.0 / mu(x, &with_j) as f64).sum();
            ensure!(inst.relative_size(j, &boxed) == direct, "case {case}: relative size of {j}");
        }
        let card: usize = boxed.iter().map(|&j| r.outfits[j].len()).sum();
        ensure!(inst.card(&boxed) == card, "case {case}: card");
        let nu: BTreeSet<usize> = boxed.iter().flat_map(|&j| r.outfits[j].clone()).collect();
        ensure!(inst.distinct_items(&boxed) == nu, "case {case}: distinct items");
        ensure!(inst.total_price(&boxed) == union_price(&r, &boxed), "case {case}: total price");
    }

    let s = shop(30);
    let set = generate_preferred_outfits(&s.catalog, &s.features, &AllPassScorer, &query(), 90)?;
    let budgets = [1_500, 3_000, 6_000, 20_000];
    for budget in budgets {
        let sol = olr_solve(&to_instance(&set.outfits, &s.catalog, budget)?)?;
        ensure!(
            sol.chosen.card == 3 * sol.chosen.outfits.len(),
            "budget {budget}: card {} for {} outfits",
            sol.chosen.card,
            sol.chosen.outfits.len()
        );
    }
    Ok(format!("1000 random boxes exact; Card = 3|H| at budgets {budgets:?}"))
}

fn runtime_scaling() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sizes = [20usize, 40, 80, 160, 320];
    let mut points = Vec::new();
    for &n in &sizes {
        // engine-shaped family: one item per type, shared tops
        let (tops, bottoms, feet) = (n / 2 + 2, 8, 6);
        let prices: Vec<u64> = (0..tops + bottoms + feet).map(|_| rng.gen_range(300..3000)).collect();
        let mut seen = BTreeSet::new();
        while seen.len() < n {
            seen.insert(vec![
                rng.gen_range(0..tops),
                tops + rng.gen_range(0..bottoms),
                tops + bottoms + rng.gen_range(0..feet),
            ]);
        }
        let outfits: Vec<Vec<usize>> = seen.into_iter().collect();
        let inst = instance(&prices, &outfits, 15_000);
        let mut times = Vec::new();
        for _ in 0..3 {
            let t = Instant::now();
            olr_solve(&inst)?;
            times.push(t.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        points.push(((n as f64).ln(), times[1].max(1e-7).ln()));
    }
    let m = points.len() as f64;
    let (mx, my) = (
        points.iter().map(|p| p.0).sum::<f64>() / m,
        points.iter().map(|p| p.1).sum::<f64>() / m,
    );
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    ensure!(slope <= 3.5, "fitted exponent {slope:.2}");
    Ok(format!("fitted exponent {slope:.2} over |O| = {sizes:?}"))
}

// ---------------------------------------------------------------- decoder

fn gradient_check() -> Result<String> {
    let started = Instant::now();
    let hyper = HyperParams {
        channels: 8,
        locations: 4,
        projection_dim: 6,
        shared_dim: 5,
        lambda_reg: 1e-3,
        lambda_vse: 0.05,
        ..HyperParams::desk()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut params = DecoderParams::xavier(PairType::TopBottom, &hyper, 7, &mut rng);
    for (_, t) in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= 1.5);
    }
    let maps: Vec<Array2<f64>> = (0..6)
        .map(|_| Array2::from_shape_fn((hyper.locations, hyper.channels), |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let tokens: Vec<Vec<usize>> = vec![vec![0, 3], vec![1], vec![2, 4, 6], vec![5], vec![0, 1, 2], vec![6]];
    let batch: Vec<Example<'_>> = (0..3)
        .map(|k| Example {
            input: PairInput {
                map_a: maps[2 * k].view(),
                tokens_a: &tokens[2 * k],
                map_b: maps[2 * k + 1].view(),
                tokens_b: &tokens[2 * k + 1],
            },
            label: k % 2 == 0,
        })
        .collect();
    let (_, analytic) = loss_total(&batch, &params, &hyper);
    let eps = 1e-4;
    let mut worst = 0.0f64;
    for (t, (name, g)) in analytic.tensors().iter().enumerate() {
        let mut diff = 0.0;
        let mut scale = (0.0, 0.0);
        for (i, &a) in g.iter().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[t].1[i] += eps;
            let mut minus = params.clone();
            minus.tensors_mut()[t].1[i] -= eps;
            let n = (loss_value(&batch, &plus, &hyper).total - loss_value(&batch, &minus, &hyper).total) / (2.0 * eps);
            diff += (a - n) * (a - n);
            scale.0 += a * a;
            scale.1 += n * n;
        }
        let denom = scale.0.sqrt() + scale.1.sqrt();
        ensure!(denom > 1e-8, "{name}: gradient vanished");
        let rel = diff.sqrt() / denom;
        ensure!(rel < 1e-3, "{name}: relative error {rel:e}");
        worst = worst.max(rel);
    }
    within(started, Duration::from_secs(10), "gradient check")?;
    Ok(format!("worst per-tensor relative error {worst:.1e}"))
}

fn bits(t: &TrainedDecoder) -> Vec<u64> {
    t.params
        .tensors()
        .iter()
        .flat_map(|(_, v)| v.iter().map(|x| x.to_bits()))
        .collect()
}

fn synthetic_training() -> Result<String> {
    let started = Instant::now();
    let pair = PairType::TopBottom;
    let data = pair_pool(pair, 60, 11)?;
    let catalog = Catalog::from_items(data.items.clone(), &CatalogConfig::default())?;
    let features = FeatureStore::from_records(data.features.shape, data.features.records.clone())?;
    let (train, valid) = hue_pairs(pair, &data, 500, 500, 12)?.split(0.8, 13);
    let hyper = HyperParams::desk();
    ensure!(hyper.epochs <= 50, "{} epochs", hyper.epochs);
    let run = || train_decoder(pair, &train, Some(&valid), &catalog, &features, &hyper);
    let first = run()?;
    let aucs: Vec<f64> = first.log.iter().filter_map(|l| l.validation_auc).collect();
    let reached = aucs.iter().position(|&a| a >= 0.95).context("validation AUC never reached 0.95")?;
    let last = *aucs.last().unwrap();
    ensure!(last >= 0.95, "final validation AUC {last}");
    let second = run()?;
    ensure!(bits(&first) == bits(&second) && first.log == second.log, "reruns differ");
    within(started, Duration::from_secs(300), "training")?;
    Ok(format!(
        "AUC >= 0.95 from epoch {} of {}, final {last:.4}; rerun bit-identical",
        reached + 1,
        hyper.epochs
    ))
}

// ---------------------------------------------------------------- engine

struct Shop {
    catalog: Catalog,
    features: FeatureStore,
}

/// Casual items under 1K: `tops` tops, b0..b5, f0..f3, distance growing with
/// the index.
fn shop(tops: usize) -> Shop {
    let mut items = Vec::new();
    let mut records = Vec::new();
    let mut add = |id: String, kind, category: &str, x: usize, price: u64| {
        items.push(Item::new(id.clone(), kind, category, Occasion::Casual, price, category));
        records.push(FeatureRecord {
            id,
            global: vec![x as f64],
            map: vec![x as f64],
        });
    };
    for k in 0..tops {
        add(format!("t{k:02}"), ClothingType::TopWear, "shirt", k, 400 + k as u64);
    }
    for k in 0..6 {
        add(format!("b{k}"), ClothingType::BottomWear, "jeans", k, 500 + k as u64);
    }
    for k in 0..4 {
        add(format!("f{k}"), ClothingType::FootWear, "trainer", k, 600 + k as u64);
    }
    let shape = FeatureShape {
        global_dim: 1,
        locations: 1,
        channels: 1,
    };
    Shop {
        catalog: Catalog::from_items(items, &CatalogConfig::default()).unwrap(),
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
    PreferenceQuery {
        occasion: Occasion::Casual,
        types: [
            (ClothingType::TopWear, pref("t00", 15)),
            (ClothingType::BottomWear, pref("b0", 3)),
            (ClothingType::FootWear, pref("f0", 2)),
        ]
        .into_iter()
        .collect(),
    }
}

fn c2_versus_c1() -> Result<String> {
    let s = shop(30);
    let mut negatives = 0;
    let mut lowest_c1 = f64::INFINITY;
    for k in 0..30 {
        let bad = PairType::ALL[k % 3];
        let outfit = Outfit::from_ids(&[&format!("t{k:02}"), &format!("b{}", k % 6), &format!("f{}", k % 4)], &s.catalog)?;
        let scorer = FnScorer(move |pair: PairType, _: &Item, _: &Item| if pair == bad { [0.9, 0.1] } else { [0.1, 0.9] });
        let score = score_outfit(&outfit, &s.catalog, &scorer)?;
        ensure!(score.c2 == 0, "outfit {k}: C2 accepted a bad pair");
        ensure!(score.c1 >= 0.5, "outfit {k}: C1 = {}", score.c1);
        lowest_c1 = lowest_c1.min(score.c1);
        negatives += 1;
    }
    Ok(format!(
        "{negatives} negative outfits: C2 rejects 100%, C1 at 0.5 accepts 100% (lowest C1 {lowest_c1:.4})"
    ))
}

fn combination_count() -> Result<String> {
    let s = shop(30);
    let set = generate_preferred_outfits(&s.catalog, &s.features, &AllPassScorer, &query(), 90)?;
    let r = &set.rounds[0];
    ensure!(r.retrieved == [15, 3, 2] && r.combinations == 90, "round {r:?}");

    // Stub: 60 of the first 90 pass, then 30 of the first 50 of round two.
    let mut rejected = BTreeSet::new();
    for k in 0..15 {
        rejected.insert((format!("t{k:02}"), "b2".to_string()));
    }
    for k in 15..23 {
        rejected.insert((format!("t{k:02}"), "b5".to_string()));
    }
    for k in 15..17 {
        rejected.insert((format!("t{k:02}"), "b4".to_string()));
    }
    let scorer = FnScorer(move |pair: PairType, a: &Item, b: &Item| {
        if pair == PairType::TopBottom && rejected.contains(&(a.id.clone(), b.id.clone())) {
            [0.9, 0.1]
        } else {
            [0.2, 0.8]
        }
    });
    let set = generate_preferred_outfits(&s.catalog, &s.features, &scorer, &query(), 90)?;
    let rounds: Vec<(usize, usize, usize)> = set.rounds.iter().map(|r| (r.combinations, r.checked, r.admitted)).collect();
    ensure!(rounds == [(90, 90, 60), (90, 50, 30)], "rounds {rounds:?}");
    ensure!(set.complete && set.outfits.len() == 90, "{} outfits", set.outfits.len());
    Ok("m=(15,3,2) gives 90 combinations; 60 then 30 of 50 stops at |O|=90".into())
}

// ---------------------------------------------------------------- metrics

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                den += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn metrics_exactness() -> Result<String> {
    ensure!(hit_ratio(10, 8)? == 0.8, "HR 8 of 10");
    ensure!(hit_ratio(7, 0)? == 0.0, "HR 0 of 7");
    ensure!((mean_hit_ratio(&[0.8, 0.6])? - 0.7).abs() < 1e-15, "MHR of 0.8, 0.6");
    ensure!(mean_hit_ratio(&[0.25; 7])? == 0.25, "MHR of a constant list");
    ensure!(auc(&[0.9, 0.8, 0.4, 0.3], &[true, true, false, false])? == 1.0, "perfect AUC");
    ensure!(auc(&[0.3, 0.9], &[true, false])? == 0.0, "inverted AUC");
    ensure!(auc(&[0.5, 0.5], &[true, false])? == 0.5, "tied AUC");
    ensure!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true])? == 0.75, "textbook AUC");

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..100 {
        let n = rng.gen_range(4..60);
        // grid values, so ties occur and transforms cannot merge scores
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..200u32)) / 200.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let base = auc(&scores, &labels)?;
        let oracle = pairwise_auc(&scores, &labels);
        ensure!((base - oracle).abs() < 1e-12, "case {case}: {base} vs pair count {oracle}");
        for (name, f) in [
            ("exp", f64::exp as fn(f64) -> f64),
            ("cube", |x: f64| x * x * x),
            ("affine", |x: f64| 3.0 * x - 7.0),
            ("logistic", |x: f64| 1.0 / (1.0 + (-4.0 * x).exp())),
        ] {
            let t: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
            ensure!(auc(&t, &labels)? == base, "case {case}: {name} changes AUC");
        }
    }
    Ok("HR/MHR/AUC hand examples exact; 100 vectors invariant under 4 monotone maps".into())
}

// ---------------------------------------------------------------- service

fn cli(dir: &Path, args: &[&str]) -> Result<Value> {
    let out = Command::new(env!("CARGO_BIN_EXE_boxrec"))
        .args(args)
        .current_dir(dir)
        .env("BOXREC_CATALOG", "demo/catalog.jsonl")
        .env("BOXREC_FEATURES", "demo/features.json")
        .env("BOXREC_CKPT_DIR", "demo/ckpt")
        .env("BOXREC_STORE", "sessions.json")
        .env("RUST_LOG", "warn")
        .output()?;
    ensure!(
        out.status.success(),
        "boxrec {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).with_context(|| format!("boxrec {}: output is not JSON", args.join(" ")))
}

fn end_to_end() -> Result<String> {
    let tmp = tempfile::tempdir()?;
    let dir = tmp.path();
    let demo = cli(dir, &["demo", "--out", "demo"])?;

    let catalog: BTreeMap<String, Value> = std::fs::read_to_string(dir.join("demo/catalog.jsonl"))?
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            (v["id"].as_str().unwrap().to_string(), v)
        })
        .collect();

    let session = cli(dir, &["session", "create"])?;
    let id = session["id"].as_str().context("session id")?.to_string();
    cli(dir, &["session", "occasion", &id, "casual"])?;
    for kind in ["top_wear", "bottom_wear", "foot_wear"] {
        // one pick per category from the first two pages
        let mut picks: BTreeMap<String, String> = BTreeMap::new();
        for page in ["0", "1"] {
            let p = cli(dir, &["session", "items", &id, "--type", kind, "--page", page])?;
            for item in p["items"].as_array().unwrap() {
                picks
                    .entry(item["category"].as_str().unwrap().to_string())
                    .or_insert_with(|| item["id"].as_str().unwrap().to_string());
            }
        }
        let mut args = vec!["session", "choices", &id, "--type", kind];
        args.extend(picks.values().map(String::as_str));
        cli(dir, &args)?;
    }
    let budget = 8000u64;
    let budget_arg = budget.to_string();
    cli(
        dir,
        &[
            "session", "constraints", &id, "--top", "0..5000", "--bottom", "0..5000", "--foot", "0..5000", "--budget",
            &budget_arg,
        ],
    )?;
    let rec = cli(dir, &["session", "recommend", &id])?;

    // independent recheck: price of the distinct items and every pair score
    let outfits = rec["outfits"].as_array().context("outfits")?;
    ensure!(!outfits.is_empty(), "empty box");
    let distinct: BTreeSet<&str> = outfits
        .iter()
        .flat_map(|o| o["items"].as_array().unwrap().iter().map(|i| i.as_str().unwrap()))
        .collect();
    let listed: BTreeSet<&str> = rec["items"].as_array().unwrap().iter().map(|i| i["id"].as_str().unwrap()).collect();
    ensure!(distinct == listed, "box items differ from the union of its outfits");
    let total: u64 = distinct.iter().map(|id| catalog[*id]["price"].as_u64().unwrap()).sum();
    ensure!(total == rec["total_price"].as_u64().unwrap(), "reported total {}", rec["total_price"]);
    ensure!(total <= budget, "T = {total} over B = {budget}");
    for o in outfits {
        let ids: Vec<&str> = o["items"].as_array().unwrap().iter().map(|i| i.as_str().unwrap()).collect();
        ensure!(ids.len() == 3, "outfit {}", o["id"]);
        for (pair, a, b) in [("tw-bw", ids[0], ids[1]), ("bw-fw", ids[1], ids[2]), ("tw-fw", ids[0], ids[2])] {
            let s = cli(dir, &["score-pair", "--pair", pair, a, b])?;
            ensure!(s["score"] == 1, "{pair} of {} scores {}", o["id"], s["probability"]);
        }
    }

    // like every outfit and the first item, dislike then re-like one outfit
    let products = listed.len() + outfits.len();
    for o in outfits {
        cli(dir, &["session", "feedback", &id, o["id"].as_str().unwrap(), "--like"])?;
    }
    let first_item = *listed.iter().next().unwrap();
    cli(dir, &["session", "feedback", &id, first_item, "--like"])?;
    cli(dir, &["session", "feedback", &id, "outfit-1", "--dislike"])?;
    cli(dir, &["session", "feedback", &id, "outfit-1", "--like"])?;
    let hr = cli(dir, &["session", "hit-ratio", &id])?;
    let hits = outfits.len() + 1;
    ensure!(hr["hits"] == hits && hr["products"] == products, "hit ratio {hr}");
    ensure!(hr["hit_ratio"].as_f64() == Some(hits as f64 / products as f64), "hit ratio {hr}");
    let view = cli(dir, &["session", "recommendation", &id])?;
    ensure!(view["recommendation"] == rec, "stored recommendation differs");
    if view["feedback"]["outfit-1"] != true {
        bail!("last mark for outfit-1 lost");
    }
    Ok(format!(
        "demo ({} items, outfit C1 AUC {}) -> box of {} outfits / {} items, T = {total} <= {budget}, all pairs rechecked; HR = {hits}/{products}",
        demo["items"],
        demo["outfit_c1_auc"],
        outfits.len(),
        listed.len()
    ))
}
