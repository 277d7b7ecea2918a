use boxrec_core::catalog::{Catalog, CatalogConfig};
use boxrec_core::decoder::{HyperParams, PairType};
use boxrec_core::features::FeatureStore;
use boxrec_core::metrics::auc;
use boxrec_core::synthetic::{hue_pairs, pair_pool, SyntheticData};
use boxrec_core::training::{
    parameter_norm, train_decoder, Checkpoint, DecoderSet, PairDataset, TrainedDecoder,
};

struct Setup {
    data: SyntheticData,
    catalog: Catalog,
    features: FeatureStore,
    train: PairDataset,
    valid: PairDataset,
}

fn setup(pair: PairType) -> Setup {
    let data = pair_pool(pair, 60, 11).unwrap();
    let catalog = Catalog::from_items(data.items.clone(), &CatalogConfig::default()).unwrap();
    let features = FeatureStore::from_records(data.features.shape, data.features.records.clone()).unwrap();
    let set = hue_pairs(pair, &data, 500, 500, 12).unwrap();
    let (train, valid) = set.split(0.8, 13);
    Setup {
        data,
        catalog,
        features,
        train,
        valid,
    }
}

fn train(s: &Setup, pair: PairType, hyper: &HyperParams) -> TrainedDecoder {
    train_decoder(pair, &s.train, Some(&s.valid), &s.catalog, &s.features, hyper).unwrap()
}

fn bits(t: &TrainedDecoder) -> Vec<u64> {
    t.params
        .tensors()
        .iter()
        .flat_map(|(_, v)| v.iter().map(|x| x.to_bits()))
        .collect()
}

#[test]
fn hue_rule_is_learned_and_reproducible() {
    let pair = PairType::TopBottom;
    let s = setup(pair);
    let hyper = HyperParams::desk();
    assert!(hyper.epochs <= 50);
    let first = train(&s, pair, &hyper);
    let best = first
        .log
        .iter()
        .filter_map(|l| l.validation_auc)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best >= 0.95, "best validation AUC {best}");
    let last = first.log.last().unwrap().validation_auc.unwrap();
    assert!(last >= 0.95, "final validation AUC {last}");

    let second = train(&s, pair, &hyper);
    assert_eq!(bits(&first), bits(&second));
    assert_eq!(first.log, second.log);
}

#[test]
fn split_sizes_and_disjointness() {
    let s = setup(PairType::TopBottom);
    assert_eq!(s.train.positives.len(), 400);
    assert_eq!(s.train.negatives.len(), 400);
    assert_eq!(s.valid.len(), 200);
    for p in &s.valid.positives {
        assert!(!s.train.positives.contains(p));
    }
}

/// Plain logistic regression on products and absolute differences of the
/// two items' pooled vectors, trained by full-batch gradient descent.
fn logistic_baseline_auc(s: &Setup) -> f64 {
    let global = |id: &str| s.features.features(id).unwrap().global.to_vec();
    let featurize = |a: &str, b: &str| {
        let (ga, gb) = (global(a), global(b));
        let mut x: Vec<f64> = ga.iter().zip(&gb).map(|(u, v)| u * v).collect();
        x.extend(ga.iter().zip(&gb).map(|(u, v)| (u - v).abs()));
        x.push(1.0);
        x
    };
    let rows: Vec<(Vec<f64>, f64)> = s
        .train
        .labelled()
        .map(|(a, b, l)| (featurize(a, b), if l { 1.0 } else { 0.0 }))
        .collect();
    let dim = rows[0].0.len();
    let mut w = vec![0.0; dim];
    for _ in 0..3000 {
        let mut grad = vec![0.0; dim];
        for (x, y) in &rows {
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let p = 1.0 / (1.0 + (-z).exp());
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += (p - y) * xi;
            }
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= 2.0 * g / rows.len() as f64;
        }
    }
    let (scores, labels): (Vec<f64>, Vec<bool>) = s
        .valid
        .labelled()
        .map(|(a, b, l)| (featurize(a, b).iter().zip(&w).map(|(x, w)| x * w).sum::<f64>(), l))
        .unzip();
    auc(&scores, &labels).unwrap()
}

#[test]
fn hue_rule_is_linearly_separable_on_pooled_features() {
    let s = setup(PairType::TopBottom);
    let baseline = logistic_baseline_auc(&s);
    assert!(baseline > 0.9, "logistic baseline AUC {baseline}");
    assert_eq!(s.data.hues.len(), 120);
}

#[test]
fn weight_penalty_shrinks_parameters() {
    let pair = PairType::BottomFoot;
    let s = setup(pair);
    let mut hyper = HyperParams::desk();
    hyper.epochs = 5;
    let free = train(&s, pair, &hyper);
    hyper.lambda_reg = 0.05;
    let penalised = train(&s, pair, &hyper);
    assert!(parameter_norm(&penalised.params) < parameter_norm(&free.params));
}

#[test]
fn checkpoint_roundtrip() {
    let pair = PairType::TopFoot;
    let s = setup(pair);
    let mut hyper = HyperParams::desk();
    hyper.epochs = 1;
    let trained = train(&s, pair, &hyper);
    let mut set = DecoderSet::default();
    set.insert(trained.params.clone());
    let ckpt = Checkpoint::new(hyper, s.catalog.vocabulary(), set);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tw-fw.json");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, ckpt);
    let merged = Checkpoint::load_dir(dir.path()).unwrap();
    assert_eq!(merged.decoders.get(pair).unwrap(), &trained.params);
    assert!(merged.check_vocabulary(s.catalog.vocabulary()).is_ok());

    std::fs::write(dir.path().join("broken.json"), "{").unwrap();
    assert!(Checkpoint::load_dir(dir.path()).is_err());
}

#[test]
fn training_rejects_mistyped_pairs() {
    let s = setup(PairType::TopBottom);
    let swapped = PairDataset {
        positives: s.train.positives.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
        negatives: vec![],
    };
    let err = train_decoder(PairType::TopBottom, &swapped, None, &s.catalog, &s.features, &HyperParams::desk());
    assert!(err.is_err());
}
