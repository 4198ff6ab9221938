//! A randomly initialised post-norm transformer encoder, never trained, used
//! to produce per-layer representations from integer token sequences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ReprMatrix;
use crate::property::{batch_property, BatchSummary, PcaConvention};
use crate::rng::{tag, CounterRng, SeedStream};
use crate::synth::LengthLaw;

const LN_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// `N(0, scale²)` weights.
    Gaussian { scale: f64 },
    /// `U[−scale, scale]` weights.
    Uniform { scale: f64 },
}

impl Init {
    fn draw(self, rng: &mut CounterRng) -> f64 {
        match self {
            Init::Gaussian { scale } => scale * rng.normal(),
            Init::Uniform { scale } => rng.uniform(-scale, scale),
        }
    }

    fn scale(self) -> f64 {
        match self {
            Init::Gaussian { scale } | Init::Uniform { scale } => scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    None,
    LearnedRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// tanh approximation
    Gelu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Gelu => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub init: Init,
    pub layer_norm: bool,
    pub positional: Positional,
    pub activation: Activation,
    pub causal: bool,
    pub seed: u64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_layers: 8,
            n_heads: 4,
            d_ff: 512,
            vocab_size: 1000,
            max_len: 128,
            // 0.02 rescaled from width 768 to 128, keeping per-map gain
            init: Init::Gaussian { scale: 0.049 },
            layer_norm: true,
            positional: Positional::LearnedRandom,
            activation: Activation::Relu,
            causal: false,
            seed: 0,
        }
    }
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::ConfigInvalid(format!("{name} must be >= 1")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::ConfigInvalid(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        let s = self.init.scale();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "init scale must be > 0, got {s}"
            )));
        }
        Ok(())
    }
}

/// Dense map `y = W x + b`, weights stored input-major so the inner loop is
/// an axpy over outputs.
#[derive(Clone, Debug, PartialEq)]
struct Linear {
    n_in: usize,
    n_out: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Linear {
    fn init(n_in: usize, n_out: usize, init: Init, stream: SeedStream) -> Self {
        let mut rng = stream.rng();
        Self {
            n_in,
            n_out,
            weight: (0..n_in * n_out).map(|_| init.draw(&mut rng)).collect(),
            bias: vec![0.0; n_out],
        }
    }

    /// Weight from input `k` to output `o`.
    #[cfg(test)]
    fn w(&self, o: usize, k: usize) -> f64 {
        self.weight[k * self.n_out + o]
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.bias);
        for (xk, row) in x.iter().zip(self.weight.chunks_exact(self.n_out)) {
            for (yo, w) in y.iter_mut().zip(row) {
                *yo += xk * w;
            }
        }
    }

    /// Applies the map to each of `l` stacked inputs.
    fn apply_rows(&self, x: &[f64], l: usize) -> Vec<f64> {
        let mut y = vec![0.0; l * self.n_out];
        for (xi, yi) in x
            .chunks_exact(self.n_in)
            .zip(y.chunks_exact_mut(self.n_out))
        {
            self.apply(xi, yi);
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerNorm {
    gain: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        Self {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
        }
    }

    fn apply(&self, x: &mut [f64]) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for ((v, g), b) in x.iter_mut().zip(&self.gain).zip(&self.bias) {
            *v = (*v - mean) * inv * g + b;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct EncoderLayer {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    ff_in: Linear,
    ff_out: Linear,
    norm_attn: Option<LayerNorm>,
    norm_ff: Option<LayerNorm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    config: ToyModelConfig,
    /// `vocab_size × d_model`, token-major.
    embedding: Vec<f64>,
    /// `max_len × d_model` when positional embeddings are enabled.
    positional: Option<Vec<f64>>,
    layers: Vec<EncoderLayer>,
}

pub fn init_model(config: &ToyModelConfig) -> Result<ToyModel> {
    config.validate()?;
    let root = SeedStream::new(config.seed).split(tag::MODEL);
    let d = config.d_model;
    let table = |rows: usize, stream: SeedStream| {
        let mut rng = stream.rng();
        (0..rows * d)
            .map(|_| config.init.draw(&mut rng))
            .collect::<Vec<_>>()
    };
    let embedding = table(config.vocab_size, root.split(0));
    let positional = match config.positional {
        Positional::None => None,
        Positional::LearnedRandom => Some(table(config.max_len, root.split(1))),
    };
    let layers = (0..config.n_layers)
        .map(|k| {
            let s = root.split(100 + k as u64);
            let norm = || config.layer_norm.then(|| LayerNorm::new(d));
            EncoderLayer {
                query: Linear::init(d, d, config.init, s.split(0)),
                key: Linear::init(d, d, config.init, s.split(1)),
                value: Linear::init(d, d, config.init, s.split(2)),
                output: Linear::init(d, d, config.init, s.split(3)),
                ff_in: Linear::init(d, config.d_ff, config.init, s.split(4)),
                ff_out: Linear::init(config.d_ff, d, config.init, s.split(5)),
                norm_attn: norm(),
                norm_ff: norm(),
            }
        })
        .collect();
    Ok(ToyModel {
        config: config.clone(),
        embedding,
        positional,
        layers,
    })
}

/// Attention weights of one layer, `[head][query][key]`.
pub type AttentionMaps = Vec<Vec<Vec<f64>>>;

impl ToyModel {
    pub fn config(&self) -> &ToyModelConfig {
        &self.config
    }

    pub fn embedding_table(&self) -> &[f64] {
        &self.embedding
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn lookup(&self, tokens: &[usize]) -> Vec<f64> {
        let d = self.config.d_model;
        let mut h = Vec::with_capacity(tokens.len() * d);
        for (pos, &t) in tokens.iter().enumerate() {
            let e = &self.embedding[t * d..(t + 1) * d];
            match &self.positional {
                Some(p) => h.extend(e.iter().zip(&p[pos * d..(pos + 1) * d]).map(|(a, b)| a + b)),
                None => h.extend_from_slice(e),
            }
        }
        h
    }

    fn attention(
        &self,
        layer: &EncoderLayer,
        h: &[f64],
        l: usize,
        maps: Option<&mut AttentionMaps>,
    ) -> Vec<f64> {
        let d = self.config.d_model;
        let n_heads = self.config.n_heads;
        let dh = d / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = layer.query.apply_rows(h, l);
        let k = layer.key.apply_rows(h, l);
        let v = layer.value.apply_rows(h, l);
        let mut context = vec![0.0; l * d];
        let mut head_maps = Vec::new();
        let mut scores = vec![0.0; l];
        for head in 0..n_heads {
            let cols = head * dh..(head + 1) * dh;
            let mut map = Vec::new();
            for i in 0..l {
                let qi = &q[i * d..][cols.clone()];
                let visible = if self.config.causal { i + 1 } else { l };
                for (j, s) in scores.iter_mut().enumerate().take(visible) {
                    let kj = &k[j * d..][cols.clone()];
                    *s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                }
                let max = scores[..visible]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for s in &mut scores[..visible] {
                    *s = (*s - max).exp();
                    total += *s;
                }
                let ci = &mut context[i * d..][cols.clone()];
                for (j, s) in scores[..visible].iter_mut().enumerate() {
                    *s /= total;
                    for (c, vj) in ci.iter_mut().zip(&v[j * d..][cols.clone()]) {
                        *c += *s * vj;
                    }
                }
                if maps.is_some() {
                    let mut row = scores[..visible].to_vec();
                    row.resize(l, 0.0);
                    map.push(row);
                }
            }
            head_maps.push(map);
        }
        if let Some(m) = maps {
            *m = head_maps;
        }
        layer.output.apply_rows(&context, l)
    }

    fn encoder_layer(
        &self,
        layer: &EncoderLayer,
        h: &mut [f64],
        l: usize,
        maps: Option<&mut AttentionMaps>,
    ) {
        let d = self.config.d_model;
        let attn = self.attention(layer, h, l, maps);
        h.iter_mut().zip(&attn).for_each(|(x, a)| *x += a);
        if let Some(norm) = &layer.norm_attn {
            h.chunks_exact_mut(d).for_each(|x| norm.apply(x));
        }
        let act = self.config.activation;
        let mut inner = layer.ff_in.apply_rows(h, l);
        inner.iter_mut().for_each(|x| *x = act.apply(*x));
        let ff = layer.ff_out.apply_rows(&inner, l);
        h.iter_mut().zip(&ff).for_each(|(x, f)| *x += f);
        if let Some(norm) = &layer.norm_ff {
            h.chunks_exact_mut(d).for_each(|x| norm.apply(x));
        }
    }

    fn run(
        &self,
        tokens: &[usize],
        mut maps: Option<&mut Vec<AttentionMaps>>,
    ) -> Result<Vec<ReprMatrix>> {
        self.check_tokens(tokens)?;
        let d = self.config.d_model;
        let l = tokens.len();
        let mut h = self.lookup(tokens);
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        out.push(ReprMatrix::from_column_major(d, l, h.clone())?);
        for layer in &self.layers {
            match maps.as_deref_mut() {
                Some(all) => {
                    let mut m = Vec::new();
                    self.encoder_layer(layer, &mut h, l, Some(&mut m));
                    all.push(m);
                }
                None => self.encoder_layer(layer, &mut h, l, None),
            }
            out.push(ReprMatrix::from_column_major(d, l, h.clone())?);
        }
        Ok(out)
    }

    /// Representations after the lookup (index 0) and after each encoder
    /// layer.
    pub fn forward_all_layers(&self, tokens: &[usize]) -> Result<Vec<ReprMatrix>> {
        self.run(tokens, None)
    }

    /// As [`Self::forward_all_layers`], also returning every layer's
    /// attention weights.
    pub fn forward_with_attention(
        &self,
        tokens: &[usize],
    ) -> Result<(Vec<ReprMatrix>, Vec<AttentionMaps>)> {
        let mut maps = Vec::new();
        let layers = self.run(tokens, Some(&mut maps))?;
        Ok((layers, maps))
    }

    /// Layer-major outputs: `result[k][s]` is layer `k` of sequence `s`.
    pub fn layer_outputs(&self, corpus: &[Vec<usize>]) -> Result<Vec<Vec<ReprMatrix>>> {
        let per_seq: Vec<Vec<ReprMatrix>> = corpus
            .par_iter()
            .map(|t| self.forward_all_layers(t))
            .collect::<Result<_>>()?;
        Ok(transpose_layers(per_seq, self.layers.len() + 1))
    }
}

fn transpose_layers(per_seq: Vec<Vec<ReprMatrix>>, n: usize) -> Vec<Vec<ReprMatrix>> {
    let mut layers: Vec<Vec<ReprMatrix>> =
        (0..n).map(|_| Vec::with_capacity(per_seq.len())).collect();
    for seq in per_seq {
        for (k, m) in seq.into_iter().enumerate() {
            layers[k].push(m);
        }
    }
    layers
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSweep {
    pub per_layer: Vec<BatchSummary>,
    pub convention: PcaConvention,
}

impl LayerSweep {
    pub fn last(&self) -> &BatchSummary {
        self.per_layer
            .last()
            .expect("sweep has at least the lookup layer")
    }
}

/// Property batch for every layer of precomputed layer-major outputs.
pub fn sweep_layers(layers: &[Vec<ReprMatrix>], conv: PcaConvention) -> Result<LayerSweep> {
    let per_layer = layers
        .iter()
        .enumerate()
        .map(|(k, corpus)| batch_property(corpus, conv, true, format!("layer {k}")))
        .collect::<Result<_>>()?;
    Ok(LayerSweep {
        per_layer,
        convention: conv,
    })
}

pub fn layer_sweep(
    model: &ToyModel,
    corpus: &[Vec<usize>],
    conv: PcaConvention,
) -> Result<LayerSweep> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    sweep_layers(&model.layer_outputs(corpus)?, conv)
}

/// Replaces each token's representation with the one from an independently,
/// uniformly chosen layer in `lo..=hi`.
pub fn mix_random_layers(
    layers: &[Vec<ReprMatrix>],
    lo: usize,
    hi: usize,
    seed: u64,
) -> Result<Vec<ReprMatrix>> {
    let n_layers = layers.len().saturating_sub(1);
    if lo > hi || hi > n_layers || layers.is_empty() {
        return Err(Error::RangeInvalid { lo, hi, n_layers });
    }
    let base = &layers[lo];
    for (k, layer) in layers.iter().enumerate().take(hi + 1).skip(lo) {
        if layer.len() != base.len() {
            return Err(Error::InvalidSpec(format!(
                "layer {k} has {} sequences, layer {lo} has {}",
                layer.len(),
                base.len()
            )));
        }
    }
    let root = SeedStream::new(seed).split(tag::MIX);
    (0..base.len())
        .into_par_iter()
        .map(|s| {
            let mut rng = root.split(s as u64).rng();
            let m = &base[s];
            let mut data = Vec::with_capacity(m.d() * m.len());
            for i in 0..m.len() {
                let k = rng.range_inclusive(lo, hi);
                let src = &layers[k][s];
                if src.d() != m.d() || src.len() != m.len() {
                    return Err(Error::DimensionMismatch {
                        expected: m.d(),
                        found: src.d(),
                        context: Some(format!("layer {k}, sequence {s}")),
                    });
                }
                data.extend_from_slice(src.column(i));
            }
            ReprMatrix::from_column_major(m.d(), m.len(), data)
        })
        .collect()
}

/// Pools every column of the corpus, shuffles, and regroups into matrices
/// with the original lengths in the original order.
pub fn shuffle_cross_sequence(corpus: &[ReprMatrix], seed: u64) -> Result<Vec<ReprMatrix>> {
    let d = corpus.first().ok_or(Error::EmptyCorpus)?.d();
    let mut columns: Vec<&[f64]> = Vec::new();
    for (s, m) in corpus.iter().enumerate() {
        if m.d() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: m.d(),
                context: Some(format!("matrix {s}")),
            });
        }
        columns.extend(m.columns());
    }
    SeedStream::new(seed)
        .split(tag::SHUFFLE)
        .rng()
        .shuffle(&mut columns);
    let mut rest = columns.as_slice();
    corpus
        .iter()
        .map(|m| {
            let (head, tail) = rest.split_at(m.len());
            rest = tail;
            ReprMatrix::from_columns(head)
        })
        .collect()
}

/// Random token sequences; with `distinct`, no id repeats within a sequence.
pub fn random_sequences(
    n: usize,
    lengths: &LengthLaw,
    vocab_size: usize,
    distinct: bool,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let root = SeedStream::new(seed).split(tag::CORPUS);
    (0..n)
        .map(|s| {
            let stream = root.split(s as u64);
            let l = lengths.draw(s, &mut stream.split(tag::LENGTH).rng());
            if distinct && l > vocab_size {
                return Err(Error::ConfigInvalid(format!(
                    "cannot draw {l} distinct tokens from a vocabulary of {vocab_size}"
                )));
            }
            let mut rng = stream.split(tag::MATRIX).rng();
            let mut seq: Vec<usize> = Vec::with_capacity(l);
            while seq.len() < l {
                let t = rng.below(vocab_size as u64) as usize;
                if !(distinct && seq.contains(&t)) {
                    seq.push(t);
                }
            }
            Ok(seq)
        })
        .collect()
}
