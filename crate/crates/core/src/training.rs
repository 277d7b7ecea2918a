//! Pair datasets, decoder training and checkpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Item, Vocabulary};
use crate::decoder::{self, DecoderParams, Example, HyperParams, PairInput, PairType};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::metrics;

/// Labelled item pairs for one pair type; the first id has the pair's first type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDataset {
    pub positives: Vec<(String, String)>,
    pub negatives: Vec<(String, String)>,
}

/// One line of a pairs JSON-lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRow {
    pub a: String,
    pub b: String,
    pub label: u8,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Positives first, then negatives.
    pub fn labelled(&self) -> impl Iterator<Item = (&str, &str, bool)> {
        self.positives
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str(), true))
            .chain(self.negatives.iter().map(|(a, b)| (a.as_str(), b.as_str(), false)))
    }

    pub fn validate(&self, pair: PairType, catalog: &Catalog) -> Result<()> {
        let (first, second) = pair.types();
        for (a, b, _) in self.labelled() {
            let (ia, ib) = (catalog.item(a)?, catalog.item(b)?);
            if ia.kind != first || ib.kind != second {
                return Err(Error::Invalid(format!(
                    "pair ({a}, {b}) is ({}, {}), expected {pair}",
                    ia.kind, ib.kind
                )));
            }
        }
        let positives: BTreeSet<_> = self.positives.iter().collect();
        if let Some((a, b)) = self.negatives.iter().find(|p| positives.contains(p)) {
            return Err(Error::Invalid(format!("pair ({a}, {b}) is both positive and negative")));
        }
        Ok(())
    }

    pub fn from_rows(rows: impl IntoIterator<Item = PairRow>) -> Self {
        let mut out = PairDataset::default();
        for row in rows {
            let pair = (row.a, row.b);
            if row.label > 0 {
                out.positives.push(pair);
            } else {
                out.negatives.push(pair);
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<PairRow> {
        self.labelled()
            .map(|(a, b, label)| PairRow {
                a: a.into(),
                b: b.into(),
                label: u8::from(label),
            })
            .collect()
    }

    /// Shuffles each class with `seed` and keeps `train_fraction` of it for training.
    pub fn split(&self, train_fraction: f64, seed: u64) -> (PairDataset, PairDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split_class = |pairs: &[(String, String)]| {
            let mut pairs = pairs.to_vec();
            pairs.shuffle(&mut rng);
            let cut = ((pairs.len() as f64) * train_fraction).round() as usize;
            let rest = pairs.split_off(cut.min(pairs.len()));
            (pairs, rest)
        };
        let (train_pos, valid_pos) = split_class(&self.positives);
        let (train_neg, valid_neg) = split_class(&self.negatives);
        (
            PairDataset {
                positives: train_pos,
                negatives: train_neg,
            },
            PairDataset {
                positives: valid_pos,
                negatives: valid_neg,
            },
        )
    }
}

pub fn load_pairs(path: &Path) -> Result<PairDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<PairRow>(l).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairDataset::from_rows(rows))
}

/// Feature maps and token indices of catalog items, resolved once.
pub struct EncodedItems<'a> {
    maps: BTreeMap<&'a str, (ndarray::ArrayView2<'a, f64>, Vec<usize>)>,
}

impl<'a> EncodedItems<'a> {
    pub fn new(
        ids: impl IntoIterator<Item = &'a str>,
        catalog: &'a Catalog,
        features: &'a FeatureStore,
        hyper: &HyperParams,
    ) -> Result<Self> {
        let mut maps = BTreeMap::new();
        for id in ids {
            if maps.contains_key(id) {
                continue;
            }
            let item = catalog.item(id)?;
            let map = decoder::encode_image(item, features, hyper)?;
            let tokens = catalog.vocabulary().indices(&item.title_tokens)?;
            maps.insert(item.id.as_str(), (map, tokens));
        }
        Ok(EncodedItems { maps })
    }

    pub fn input(&self, a: &str, b: &str) -> Result<PairInput<'_>> {
        let (map_a, tokens_a) = self.maps.get(a).ok_or_else(|| Error::UnknownItem(a.into()))?;
        let (map_b, tokens_b) = self.maps.get(b).ok_or_else(|| Error::UnknownItem(b.into()))?;
        Ok(PairInput {
            map_a: *map_a,
            tokens_a,
            map_b: *map_b,
            tokens_b,
        })
    }

    pub fn examples(&self, data: &PairDataset) -> Result<Vec<Example<'_>>> {
        data.labelled()
            .map(|(a, b, label)| Ok(Example { input: self.input(a, b)?, label }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-example training loss over the epoch.
    pub train_loss: f64,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedDecoder {
    pub params: DecoderParams,
    pub log: Vec<EpochLog>,
}

/// Adam moments; with `weight_decay > 0` the decay is decoupled from the
/// gradient (AdamW).
struct Adam {
    first: DecoderParams,
    second: DecoderParams,
    step: i32,
}

impl Adam {
    fn new(like: &DecoderParams) -> Self {
        let mut first = like.clone();
        for (_, t) in first.tensors_mut() {
            t.fill(0.0);
        }
        Adam {
            second: first.clone(),
            first,
            step: 0,
        }
    }

    fn update(&mut self, params: &mut DecoderParams, grad: &DecoderParams, lr: f64, hyper: &HyperParams) {
        self.step += 1;
        let bias1 = 1.0 - hyper.beta1.powi(self.step);
        let bias2 = 1.0 - hyper.beta2.powi(self.step);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for i in 0..p.len() {
                let g = g[i].clamp(hyper.clip_lo, hyper.clip_hi);
                m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
                v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * (m_hat / (v_hat.sqrt() + hyper.adam_eps) + hyper.weight_decay * p[i]);
            }
        }
    }
}

/// Learning rate for a 0-based epoch under step decay.
pub fn learning_rate_at(hyper: &HyperParams, epoch: usize) -> f64 {
    hyper.learning_rate * hyper.lr_decay_factor.powi((epoch / hyper.lr_decay_every_epochs) as i32)
}

/// Trains one decoder from Xavier initialization. Deterministic for a fixed
/// `hyper.seed`.
pub fn train_decoder(
    pair: PairType,
    train: &PairDataset,
    validation: Option<&PairDataset>,
    catalog: &Catalog,
    features: &FeatureStore,
    hyper: &HyperParams,
) -> Result<TrainedDecoder> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    train.validate(pair, catalog)?;
    if let Some(v) = validation {
        v.validate(pair, catalog)?;
    }

    let ids = train
        .labelled()
        .chain(validation.into_iter().flat_map(|v| v.labelled()))
        .flat_map(|(a, b, _)| [a, b]);
    let encoded = EncodedItems::new(ids, catalog, features, hyper)?;
    let examples = encoded.examples(train)?;
    let validation_examples = validation.map(|v| encoded.examples(v)).transpose()?;

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut params = DecoderParams::xavier(pair, hyper, catalog.vocabulary().len(), &mut rng);
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(hyper.epochs);

    for epoch in 0..hyper.epochs {
        let lr = learning_rate_at(hyper, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| examples[i]).collect();
            let (loss, grad) = decoder::loss_total(&batch, &params, hyper);
            epoch_loss += loss.compat + hyper.lambda_vse * loss.vse;
            adam.update(&mut params, &grad, lr, hyper);
        }
        let validation_auc = validation_examples
            .as_deref()
            .map(|v| validation_auc(v, &params))
            .transpose()?;
        log.push(EpochLog {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: epoch_loss / examples.len() as f64,
            validation_auc,
        });
    }
    params.validate()?;
    Ok(TrainedDecoder { params, log })
}

fn validation_auc(examples: &[Example<'_>], params: &DecoderParams) -> Result<f64> {
    let scores: Vec<f64> = examples
        .iter()
        .map(|e| decoder::forward(&e.input, params).probabilities[1])
        .collect();
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    metrics::auc(&scores, &labels)
}

/// The three pair-type decoders plus the vocabulary they were trained on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecoderSet {
    pub decoders: BTreeMap<PairType, DecoderParams>,
}

impl DecoderSet {
    pub fn get(&self, pair: PairType) -> Result<&DecoderParams> {
        self.decoders
            .get(&pair)
            .ok_or_else(|| Error::MissingDecoder(pair.to_string()))
    }

    pub fn insert(&mut self, params: DecoderParams) {
        self.decoders.insert(params.pair, params);
    }

    pub fn is_complete(&self) -> bool {
        PairType::ALL.iter().all(|p| self.decoders.contains_key(p))
    }
}

/// `[p(r = 0), p(r = 1)]` for two catalog items under the decoder of `pair`.
/// `a` must have the pair's first type.
pub fn pair_probabilities(
    params: &DecoderParams,
    pair: PairType,
    a: &Item,
    b: &Item,
    features: &FeatureStore,
    vocabulary: &Vocabulary,
    hyper: &HyperParams,
) -> Result<[f64; 2]> {
    if params.pair != pair {
        return Err(Error::PairTypeMismatch {
            expected: params.pair.to_string(),
            got: pair.to_string(),
        });
    }
    let (first, second) = pair.types();
    if a.kind != first || b.kind != second {
        return Err(Error::PairTypeMismatch {
            expected: pair.to_string(),
            got: format!("{}-{}", a.kind.short(), b.kind.short()),
        });
    }
    let map_a = decoder::encode_image(a, features, hyper)?;
    let map_b = decoder::encode_image(b, features, hyper)?;
    let tokens_a = vocabulary.indices(&a.title_tokens)?;
    let tokens_b = vocabulary.indices(&b.title_tokens)?;
    let input = PairInput {
        map_a,
        tokens_a: &tokens_a,
        map_b,
        tokens_b: &tokens_b,
    };
    Ok(decoder::forward(&input, params).probabilities)
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized decoders with the hyperparameters and vocabulary fingerprint
/// they were trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub hyper: HyperParams,
    pub vocabulary_hash: String,
    pub vocabulary_size: usize,
    pub decoders: DecoderSet,
}

impl Checkpoint {
    pub fn new(hyper: HyperParams, vocabulary: &Vocabulary, decoders: DecoderSet) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            hyper,
            vocabulary_hash: vocabulary.fingerprint(),
            vocabulary_size: vocabulary.len(),
            decoders,
        }
    }

    pub fn check_vocabulary(&self, vocabulary: &Vocabulary) -> Result<()> {
        if self.vocabulary_hash != vocabulary.fingerprint() {
            return Err(Error::Invalid(
                "checkpoint was trained on a different catalog vocabulary".into(),
            ));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported checkpoint version {}",
                ckpt.format_version
            )));
        }
        for params in ckpt.decoders.decoders.values() {
            params.validate()?;
            if params.vocab_size() != ckpt.vocabulary_size {
                return Err(Error::Dimension(format!(
                    "decoder {} embeds {} tokens, checkpoint vocabulary has {}",
                    params.pair,
                    params.vocab_size(),
                    ckpt.vocabulary_size
                )));
            }
        }
        Ok(ckpt)
    }

    /// Merges every `*.json` checkpoint in `dir`; all must agree on
    /// hyperparameters and vocabulary.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        paths.sort();
        let mut merged: Option<Checkpoint> = None;
        for path in paths {
            let ckpt = Checkpoint::load(&path)?;
            match merged.as_mut() {
                None => merged = Some(ckpt),
                Some(m) => {
                    if m.vocabulary_hash != ckpt.vocabulary_hash || m.hyper != ckpt.hyper {
                        return Err(Error::Invalid(format!(
                            "checkpoint {} disagrees with the others in {}",
                            path.display(),
                            dir.display()
                        )));
                    }
                    m.decoders.decoders.extend(ckpt.decoders.decoders);
                }
            }
        }
        merged.ok_or_else(|| Error::Invalid(format!("no checkpoints in {}", dir.display())))
    }
}

/// Frobenius-style norm of all parameters.
pub fn parameter_norm(params: &DecoderParams) -> f64 {
    params.squared_norm().sqrt()
}
