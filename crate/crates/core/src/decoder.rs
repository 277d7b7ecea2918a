//! Pairwise compatibility decoder.
//!
//! For a pair of items `(a, b)` of a fixed [`PairType`] the decoder pools each
//! item's local feature map, re-weights every map with attention conditioned
//! on the *other* item's pooled vector, projects the attended vectors, adds a
//! bag-of-words text embedding, and classifies the pair through a shared
//! hidden layer into `p(r = 0)` / `p(r = 1)`.
//!
//! Every forward step is exposed as a free function so it can be tested on its
//! own; [`forward`] chains them and keeps the intermediates that [`loss_total`]
//! needs for the analytic gradient.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ClothingType, Item, Vocabulary};
use crate::error::{Error, Result};
use crate::features::FeatureStore;

pub const LEAKY_SLOPE: f64 = 0.01;
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// One of the three type pairs, each with its own decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PairType {
    #[serde(rename = "tw-bw")]
    TopBottom,
    #[serde(rename = "bw-fw")]
    BottomFoot,
    #[serde(rename = "tw-fw")]
    TopFoot,
}

impl PairType {
    pub const ALL: [PairType; 3] = [PairType::TopBottom, PairType::BottomFoot, PairType::TopFoot];

    pub fn types(self) -> (ClothingType, ClothingType) {
        use ClothingType::*;
        match self {
            PairType::TopBottom => (TopWear, BottomWear),
            PairType::BottomFoot => (BottomWear, FootWear),
            PairType::TopFoot => (TopWear, FootWear),
        }
    }

    /// Canonical pair type for two clothing types and whether the arguments
    /// arrived in swapped order.
    pub fn canonical(a: ClothingType, b: ClothingType) -> Option<(PairType, bool)> {
        PairType::ALL.into_iter().find_map(|pair| {
            let (first, second) = pair.types();
            if (a, b) == (first, second) {
                Some((pair, false))
            } else if (b, a) == (first, second) {
                Some((pair, true))
            } else {
                None
            }
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairType::TopBottom => "tw-bw",
            PairType::BottomFoot => "bw-fw",
            PairType::TopFoot => "tw-fw",
        }
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(['-', ',', ':'])
            .ok_or_else(|| Error::Parse(format!("pair type `{s}` should look like tw-bw")))?;
        let (a, b): (ClothingType, ClothingType) = (a.parse()?, b.parse()?);
        match PairType::canonical(a, b) {
            Some((pair, false)) => Ok(pair),
            Some((pair, true)) => Err(Error::Parse(format!(
                "pair type `{s}` is not canonical, use `{pair}`"
            ))),
            None => Err(Error::Parse(format!("`{s}` is not a pair of distinct types"))),
        }
    }
}

/// Decoder and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Channels per feature-map location.
    pub channels: usize,
    /// Feature-map locations.
    pub locations: usize,
    /// Visual/textual projection width.
    pub projection_dim: usize,
    /// Shared hidden layer width.
    pub shared_dim: usize,
    pub lambda_reg: f64,
    pub lambda_vse: f64,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every_epochs: usize,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl HyperParams {
    /// Small dimensions that train in seconds on a laptop. The few hundred
    /// optimizer steps a desk dataset yields need a larger, slower-decaying
    /// step size than the full-size schedule.
    pub fn desk() -> Self {
        HyperParams {
            channels: 16,
            locations: 9,
            projection_dim: 24,
            shared_dim: 32,
            learning_rate: 1e-2,
            lr_decay_every_epochs: 20,
            epochs: 50,
            ..Self::full_size()
        }
    }

    /// Full-size configuration (768-channel 17x17 maps).
    pub fn full_size() -> Self {
        HyperParams {
            channels: 768,
            locations: 289,
            projection_dim: 900,
            shared_dim: 1024,
            lambda_reg: 1e-5,
            lambda_vse: 0.01,
            learning_rate: 1e-3,
            lr_decay_factor: 0.1,
            lr_decay_every_epochs: 5,
            clip_lo: -5.0,
            clip_hi: 5.0,
            batch_size: 32,
            epochs: 15,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.channels, self.locations, self.projection_dim, self.shared_dim];
        if dims.contains(&0) {
            return Err(Error::Invalid("decoder dimensions must be positive".into()));
        }
        if self.clip_lo.partial_cmp(&self.clip_hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Invalid("clip_lo must be below clip_hi".into()));
        }
        if self.lambda_reg < 0.0 || self.lambda_vse < 0.0 {
            return Err(Error::Invalid("regularization weights must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.lr_decay_every_epochs == 0 {
            return Err(Error::Invalid("batch size and decay period must be positive".into()));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self::desk()
    }
}

/// Learnable tensors of one pair-type decoder. The same struct holds
/// gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams {
    pub pair: PairType,
    /// Attention transform of target locations, `channels x channels`.
    pub w_d: Array2<f64>,
    /// Attention transform of the source pooled vector, `channels x channels`.
    pub u_d: Array2<f64>,
    /// Attention scoring vector, `channels`.
    pub v_d: Array1<f64>,
    /// Visual projection, `projection x channels`.
    pub w_p: Array2<f64>,
    /// Text embedding, `projection x vocabulary`.
    pub w_e: Array2<f64>,
    /// Shared-space map of the first item, `shared x projection`.
    pub w_s: Array2<f64>,
    /// Shared-space map of the second item, `shared x projection`.
    pub u_s: Array2<f64>,
    /// Output layer, `2 x shared`.
    pub w_r: Array2<f64>,
}

pub const TENSOR_NAMES: [&str; 8] = ["w_d", "u_d", "v_d", "w_p", "w_e", "w_s", "u_s", "w_r"];

impl DecoderParams {
    pub fn zeros(pair: PairType, hyper: &HyperParams, vocab_size: usize) -> Self {
        let (d, a, b) = (hyper.channels, hyper.projection_dim, hyper.shared_dim);
        DecoderParams {
            pair,
            w_d: Array2::zeros((d, d)),
            u_d: Array2::zeros((d, d)),
            v_d: Array1::zeros(d),
            w_p: Array2::zeros((a, d)),
            w_e: Array2::zeros((a, vocab_size)),
            w_s: Array2::zeros((b, a)),
            u_s: Array2::zeros((b, a)),
            w_r: Array2::zeros((2, b)),
        }
    }

    /// Xavier-uniform initialization, `U(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`.
    pub fn xavier<R: Rng>(pair: PairType, hyper: &HyperParams, vocab_size: usize, rng: &mut R) -> Self {
        let mut params = Self::zeros(pair, hyper, vocab_size);
        for (_, tensor, (fan_out, fan_in)) in params.tensors_with_fans_mut() {
            let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            for v in tensor.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        params
    }

    fn tensors_with_fans_mut(&mut self) -> Vec<(&'static str, &mut [f64], (usize, usize))> {
        let fans = |a: &Array2<f64>| a.dim();
        let dims = [
            fans(&self.w_d),
            fans(&self.u_d),
            (1, self.v_d.len()),
            fans(&self.w_p),
            fans(&self.w_e),
            fans(&self.w_s),
            fans(&self.u_s),
            fans(&self.w_r),
        ];
        self.tensors_mut()
            .into_iter()
            .zip(dims)
            .map(|((name, t), fan)| (name, t, fan))
            .collect()
    }

    /// Flat views of the eight tensors, in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [(&'static str, &[f64]); 8] {
        fn flat2(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        [
            ("w_d", flat2(&self.w_d)),
            ("u_d", flat2(&self.u_d)),
            ("v_d", self.v_d.as_slice().expect("standard layout")),
            ("w_p", flat2(&self.w_p)),
            ("w_e", flat2(&self.w_e)),
            ("w_s", flat2(&self.w_s)),
            ("u_s", flat2(&self.u_s)),
            ("w_r", flat2(&self.w_r)),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 8] {
        [
            ("w_d", self.w_d.as_slice_mut().expect("standard layout")),
            ("u_d", self.u_d.as_slice_mut().expect("standard layout")),
            ("v_d", self.v_d.as_slice_mut().expect("standard layout")),
            ("w_p", self.w_p.as_slice_mut().expect("standard layout")),
            ("w_e", self.w_e.as_slice_mut().expect("standard layout")),
            ("w_s", self.w_s.as_slice_mut().expect("standard layout")),
            ("u_s", self.u_s.as_slice_mut().expect("standard layout")),
            ("w_r", self.w_r.as_slice_mut().expect("standard layout")),
        ]
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum()
    }

    pub fn channels(&self) -> usize {
        self.v_d.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.w_e.ncols()
    }

    /// Checks tensor shapes against each other and finiteness of all entries.
    pub fn validate(&self) -> Result<()> {
        let d = self.v_d.len();
        let a = self.w_p.nrows();
        let b = self.w_s.nrows();
        let expected = [
            ("w_d", self.w_d.dim(), (d, d)),
            ("u_d", self.u_d.dim(), (d, d)),
            ("w_p", self.w_p.dim(), (a, d)),
            ("w_e", (self.w_e.nrows(), 0), (a, 0)),
            ("w_s", self.w_s.dim(), (b, a)),
            ("u_s", self.u_s.dim(), (b, a)),
            ("w_r", self.w_r.dim(), (2, b)),
        ];
        for (name, got, want) in expected {
            if got != want {
                return Err(Error::Dimension(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        for (name, t) in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("decoder tensor {name}")));
            }
        }
        Ok(())
    }

    fn add_scaled(&mut self, other: &DecoderParams, scale: f64) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

/// Looks up and shape-checks the feature map of `item`. The map is produced
/// by whichever encoder populated the store.
pub fn encode_image<'a>(item: &Item, features: &'a FeatureStore, hyper: &HyperParams) -> Result<ArrayView2<'a, f64>> {
    let map = &features.features(&item.feature_ref)?.map;
    if map.dim() != (hyper.locations, hyper.channels) {
        return Err(Error::Dimension(format!(
            "feature map of `{}` is {:?}, decoder expects ({}, {})",
            item.id,
            map.dim(),
            hyper.locations,
            hyper.channels
        )));
    }
    Ok(map.view())
}

/// Mean over locations.
pub fn global_pool(map: ArrayView2<f64>) -> Array1<f64> {
    map.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(map.ncols()))
}

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// `tanh(W_d f_i + U_d g)` for every target location, `locations x channels`.
fn attention_hidden(target: ArrayView2<f64>, source_pooled: ArrayView1<f64>, params: &DecoderParams) -> Array2<f64> {
    let bias = params.u_d.dot(&source_pooled);
    let mut hidden = target.dot(&params.w_d.t());
    hidden += &bias;
    hidden.mapv_inplace(f64::tanh);
    hidden
}

/// Attention logits over the target's locations.
pub fn attention_logits(target: ArrayView2<f64>, source_pooled: ArrayView1<f64>, params: &DecoderParams) -> Array1<f64> {
    attention_hidden(target, source_pooled, params).dot(&params.v_d)
}

/// Softmax-normalized attention over the target's locations, conditioned on
/// the other item's pooled vector.
pub fn attention_weights(target: ArrayView2<f64>, source_pooled: ArrayView1<f64>, params: &DecoderParams) -> Array1<f64> {
    softmax(attention_logits(target, source_pooled, params).view())
}

/// Attention-weighted sum of the map's rows.
pub fn attend(map: ArrayView2<f64>, weights: ArrayView1<f64>) -> Array1<f64> {
    map.t().dot(&weights)
}

/// Attended vectors `(ĝ_a, ĝ_b)`: each map is attended using the other
/// item's pooled vector, both directions sharing one set of attention weights.
pub fn mutual_attention(map_a: ArrayView2<f64>, map_b: ArrayView2<f64>, params: &DecoderParams) -> (Array1<f64>, Array1<f64>) {
    let g_a = global_pool(map_a);
    let g_b = global_pool(map_b);
    let alpha_b = attention_weights(map_b, g_a.view(), params);
    let alpha_a = attention_weights(map_a, g_b.view(), params);
    (attend(map_a, alpha_a.view()), attend(map_b, alpha_b.view()))
}

pub fn project_visual(attended: ArrayView1<f64>, params: &DecoderParams) -> Array1<f64> {
    params.w_p.dot(&attended).mapv(|v| v.max(0.0))
}

/// Sum of the text-embedding columns at the given vocabulary indices.
pub fn embed_tokens(token_indices: &[usize], params: &DecoderParams) -> Array1<f64> {
    let mut out = Array1::zeros(params.w_e.nrows());
    for &k in token_indices {
        out += &params.w_e.column(k);
    }
    out
}

/// Text embedding of an item's bag of words.
pub fn embed_text(item: &Item, vocabulary: &Vocabulary, params: &DecoderParams) -> Result<Array1<f64>> {
    let indices = vocabulary.indices(&item.title_tokens)?;
    if let Some(&k) = indices.iter().find(|&&k| k >= params.vocab_size()) {
        return Err(Error::Dimension(format!(
            "token index {k} outside decoder vocabulary of {}",
            params.vocab_size()
        )));
    }
    Ok(embed_tokens(&indices, params))
}

pub fn fuse(visual: ArrayView1<f64>, textual: ArrayView1<f64>) -> Array1<f64> {
    (&visual + &textual).mapv(f64::tanh)
}

fn leaky_relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

/// `[p(r = 0), p(r = 1)]` for fused representations of the first and second item.
pub fn compat_probability(v_a: ArrayView1<f64>, v_b: ArrayView1<f64>, params: &DecoderParams) -> [f64; 2] {
    let shared = (params.w_s.dot(&v_a) + params.u_s.dot(&v_b)).mapv(leaky_relu);
    let p = softmax(params.w_r.dot(&shared).view());
    [p[0], p[1]]
}

/// 1 iff the pair is strictly more likely compatible than not.
pub fn binary_score(p: [f64; 2]) -> u8 {
    u8::from(p[1] > p[0])
}

/// Everything the decoder needs about one pair; `a` is always the first type
/// of the decoder's pair type.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub map_a: ArrayView2<'a, f64>,
    pub tokens_a: &'a [usize],
    pub map_b: ArrayView2<'a, f64>,
    pub tokens_b: &'a [usize],
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub g_a: Array1<f64>,
    pub g_b: Array1<f64>,
    /// Attention over `a`'s locations, conditioned on `g_b`.
    pub alpha_a: Array1<f64>,
    pub alpha_b: Array1<f64>,
    hidden_a: Array2<f64>,
    hidden_b: Array2<f64>,
    pub attended_a: Array1<f64>,
    pub attended_b: Array1<f64>,
    proj_a: Array1<f64>,
    proj_b: Array1<f64>,
    pub visual_a: Array1<f64>,
    pub visual_b: Array1<f64>,
    pub text_a: Array1<f64>,
    pub text_b: Array1<f64>,
    pub fused_a: Array1<f64>,
    pub fused_b: Array1<f64>,
    shared_pre: Array1<f64>,
    shared: Array1<f64>,
    pub probabilities: [f64; 2],
}

pub fn forward(input: &PairInput<'_>, params: &DecoderParams) -> Forward {
    let g_a = global_pool(input.map_a);
    let g_b = global_pool(input.map_b);

    let hidden_a = attention_hidden(input.map_a, g_b.view(), params);
    let alpha_a = softmax(hidden_a.dot(&params.v_d).view());
    let attended_a = attend(input.map_a, alpha_a.view());

    let hidden_b = attention_hidden(input.map_b, g_a.view(), params);
    let alpha_b = softmax(hidden_b.dot(&params.v_d).view());
    let attended_b = attend(input.map_b, alpha_b.view());

    let proj_a = params.w_p.dot(&attended_a);
    let proj_b = params.w_p.dot(&attended_b);
    let visual_a = proj_a.mapv(|v| v.max(0.0));
    let visual_b = proj_b.mapv(|v| v.max(0.0));
    let text_a = embed_tokens(input.tokens_a, params);
    let text_b = embed_tokens(input.tokens_b, params);
    let fused_a = fuse(visual_a.view(), text_a.view());
    let fused_b = fuse(visual_b.view(), text_b.view());

    let shared_pre = params.w_s.dot(&fused_a) + params.u_s.dot(&fused_b);
    let shared = shared_pre.mapv(leaky_relu);
    let p = softmax(params.w_r.dot(&shared).view());

    Forward {
        g_a,
        g_b,
        alpha_a,
        alpha_b,
        hidden_a,
        hidden_b,
        attended_a,
        attended_b,
        proj_a,
        proj_b,
        visual_a,
        visual_b,
        text_a,
        text_b,
        fused_a,
        fused_b,
        shared_pre,
        shared,
        probabilities: [p[0], p[1]],
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub compat: f64,
    pub reg: f64,
    pub vse: f64,
    pub total: f64,
}

/// A labelled pair; `label` is true for compatible pairs.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub input: PairInput<'a>,
    pub label: bool,
}

/// Loss of one batch and its gradient with respect to every tensor:
/// `sum(-log p(true label)) + lambda_reg * |theta|^2 + lambda_vse * sum(vse)`.
pub fn loss_total(batch: &[Example<'_>], params: &DecoderParams, hyper: &HyperParams) -> (LossBreakdown, DecoderParams) {
    let mut grad = DecoderParams::zeros(params.pair, hyper, params.vocab_size());
    let mut loss = LossBreakdown::default();
    for example in batch {
        let fwd = forward(&example.input, params);
        let (compat, vse) = backward(example, &fwd, params, hyper.lambda_vse, &mut grad);
        loss.compat += compat;
        loss.vse += vse;
    }
    loss.reg = params.squared_norm();
    grad.add_scaled(params, 2.0 * hyper.lambda_reg);
    loss.total = loss.compat + hyper.lambda_reg * loss.reg + hyper.lambda_vse * loss.vse;
    (loss, grad)
}

/// Loss value only; used by gradient checks and validation.
pub fn loss_value(batch: &[Example<'_>], params: &DecoderParams, hyper: &HyperParams) -> LossBreakdown {
    let mut loss = LossBreakdown::default();
    for example in batch {
        let fwd = forward(&example.input, params);
        loss.compat += nll(fwd.probabilities, example.label);
        loss.vse += vse_term(&fwd);
    }
    loss.reg = params.squared_norm();
    loss.total = loss.compat + hyper.lambda_reg * loss.reg + hyper.lambda_vse * loss.vse;
    loss
}

fn nll(p: [f64; 2], label: bool) -> f64 {
    -p[usize::from(label)].max(PROBABILITY_FLOOR).ln()
}

fn vse_term(fwd: &Forward) -> f64 {
    let diff_a = &fwd.visual_a - &fwd.text_a;
    let diff_b = &fwd.visual_b - &fwd.text_b;
    diff_a.dot(&diff_a) + diff_b.dot(&diff_b)
}

/// Accumulates the gradient of one example's compat + weighted VSE loss.
fn backward(example: &Example<'_>, fwd: &Forward, params: &DecoderParams, lambda_vse: f64, grad: &mut DecoderParams) -> (f64, f64) {
    let label = usize::from(example.label);
    let p = fwd.probabilities;
    let compat = nll(p, example.label);
    let vse = vse_term(fwd);

    // d(-log p_y)/dz = p - onehot(y); zero once the floor clamps the log.
    let mut d_logits = Array1::from(vec![p[0], p[1]]);
    if p[label] >= PROBABILITY_FLOOR {
        d_logits[label] -= 1.0;
    } else {
        d_logits.fill(0.0);
    }

    grad.w_r += &outer(d_logits.view(), fwd.shared.view());
    let d_shared = params.w_r.t().dot(&d_logits);
    let d_shared_pre = Array1::from_iter(
        d_shared
            .iter()
            .zip(&fwd.shared_pre)
            .map(|(&d, &s)| if s > 0.0 { d } else { LEAKY_SLOPE * d }),
    );
    grad.w_s += &outer(d_shared_pre.view(), fwd.fused_a.view());
    grad.u_s += &outer(d_shared_pre.view(), fwd.fused_b.view());
    let d_fused_a = params.w_s.t().dot(&d_shared_pre);
    let d_fused_b = params.u_s.t().dot(&d_shared_pre);

    let sides = [
        (
            d_fused_a,
            &fwd.fused_a,
            &fwd.visual_a,
            &fwd.text_a,
            &fwd.proj_a,
            &fwd.attended_a,
            example.input.tokens_a,
            example.input.map_a,
            &fwd.alpha_a,
            &fwd.hidden_a,
            &fwd.g_b,
        ),
        (
            d_fused_b,
            &fwd.fused_b,
            &fwd.visual_b,
            &fwd.text_b,
            &fwd.proj_b,
            &fwd.attended_b,
            example.input.tokens_b,
            example.input.map_b,
            &fwd.alpha_b,
            &fwd.hidden_b,
            &fwd.g_a,
        ),
    ];
    for (d_fused, fused, visual, text, proj, attended, tokens, map, alpha, hidden, source_pooled) in sides {
        // fused = tanh(visual + text)
        let d_sum = Array1::from_iter(d_fused.iter().zip(fused).map(|(&d, &v)| d * (1.0 - v * v)));
        let d_vse = (visual - text) * (2.0 * lambda_vse);
        let d_visual = &d_sum + &d_vse;
        let d_text = &d_sum - &d_vse;

        for &k in tokens {
            let mut column = grad.w_e.column_mut(k);
            column += &d_text;
        }

        let d_proj = Array1::from_iter(
            d_visual
                .iter()
                .zip(proj)
                .map(|(&d, &h)| if h > 0.0 { d } else { 0.0 }),
        );
        grad.w_p += &outer(d_proj.view(), attended.view());
        let d_attended = params.w_p.t().dot(&d_proj);

        // attended = map^T alpha, alpha = softmax(beta)
        let d_alpha = map.dot(&d_attended);
        let mean = alpha.dot(&d_alpha);
        let d_beta = alpha * &(d_alpha - mean);

        // beta_i = v_d . hidden_i, hidden = tanh(map W_d^T + 1 (U_d g)^T)
        grad.v_d += &hidden.t().dot(&d_beta);
        let mut d_pre = outer(d_beta.view(), params.v_d.view());
        d_pre.zip_mut_with(hidden, |d, &h| *d *= 1.0 - h * h);
        grad.w_d += &d_pre.t().dot(&map);
        let d_bias = d_pre.sum_axis(Axis(0));
        grad.u_d += &outer(d_bias.view(), source_pooled.view());
    }

    (compat, vse)
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}
