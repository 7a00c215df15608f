//! Post-norm transformer encoder on the tape.
//!
//! Sequences of a batch are stacked row-wise with padding removed; every
//! attention call is restricted to a sequence's own row range, so padding can
//! never leak into a valid token.

use std::ops::Range;

use ndarray::Axis;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Mat, Tape, Var};
use crate::params::{ParamId, ParamStore};

/// Inverted dropout noise source for one forward pass.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    pub(crate) fn apply(&mut self, tape: &mut Tape, x: Var) -> Var {
        if self.rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let shape = tape.value(x).dim();
        let rng = &mut *self.rng;
        let mask = Mat::from_shape_simple_fn(shape, || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
        tape.mul_const(x, mask)
    }
}

pub(crate) fn maybe_dropout(tape: &mut Tape, x: Var, dropout: &mut Option<Dropout<'_>>) -> Var {
    match dropout {
        Some(d) => d.apply(tape, x),
        None => x,
    }
}

#[derive(Clone, Debug)]
pub struct LayerNormIds {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormIds {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        Self {
            gamma: store.ones(format!("{prefix}.gamma"), (1, dim)),
            beta: store.zeros(format!("{prefix}.beta"), (1, dim)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, output: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: store.normal(format!("{prefix}.weight"), (input, output), std, rng),
            bias: store.zeros(format!("{prefix}.bias"), (1, output)),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

/// Multi-head attention block with output projection. Queries and keys may
/// come from different row sets.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl AttentionBlock {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize, heads: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            query: Linear::new(store, &format!("{prefix}.query"), dim, dim, std, rng),
            key: Linear::new(store, &format!("{prefix}.key"), dim, dim, std, rng),
            value: Linear::new(store, &format!("{prefix}.value"), dim, dim, std, rng),
            output: Linear::new(store, &format!("{prefix}.output"), dim, dim, std, rng),
            heads,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        queries: Var,
        context: Var,
        q_segments: &[Range<usize>],
        kv_segments: &[Range<usize>],
    ) -> Var {
        let q = self.query.forward(tape, store, queries);
        let k = self.key.forward(tape, store, context);
        let v = self.value.forward(tape, store, context);
        let a = tape.attention(q, k, v, q_segments.to_vec(), kv_segments.to_vec(), self.heads);
        self.output.forward(tape, store, a)
    }
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub attention: AttentionBlock,
    pub attention_norm: LayerNormIds,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_norm: LayerNormIds,
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            attention: AttentionBlock::new(store, &format!("{prefix}.attention"), dim, heads, std, rng),
            attention_norm: LayerNormIds::new(store, &format!("{prefix}.attention_norm"), dim),
            ffn_in: Linear::new(store, &format!("{prefix}.ffn_in"), dim, ffn_dim, std, rng),
            ffn_out: Linear::new(store, &format!("{prefix}.ffn_out"), ffn_dim, dim, std, rng),
            ffn_norm: LayerNormIds::new(store, &format!("{prefix}.ffn_norm"), dim),
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        segments: &[Range<usize>],
        dropout: &mut Option<Dropout<'_>>,
    ) -> Var {
        let a = self.attention.forward(tape, store, x, x, segments, segments);
        let a = maybe_dropout(tape, a, dropout);
        let x = tape.add(x, a);
        let x = self.attention_norm.forward(tape, store, x);
        let f = self.ffn_in.forward(tape, store, x);
        let f = tape.gelu(f);
        let f = self.ffn_out.forward(tape, store, f);
        let f = maybe_dropout(tape, f, dropout);
        let x = tape.add(x, f);
        self.ffn_norm.forward(tape, store, x)
    }
}

/// Stacked token states of a batch: `layers[0]` is the embedding output,
/// `layers[l]` the output of layer `l`. Sequence `i` owns rows `segments[i]`.
#[derive(Clone, Debug)]
pub struct StackedStates {
    pub layers: Vec<Var>,
    pub segments: Vec<Range<usize>>,
}

/// Per-sequence augmentation of the embedding output.
pub enum EmbeddingNoise<'a> {
    None,
    /// Zero `⌊rate · n⌋` word-token rows per sequence (the leading `[CLS]`
    /// row is never cut).
    Cutoff { rate: f64, rng: &'a mut ChaCha8Rng },
}

#[derive(Clone, Debug)]
pub struct Transformer {
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub embedding_norm: LayerNormIds,
    pub layers: Vec<EncoderLayer>,
}

impl Transformer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        vocab_size: usize,
        max_tokens: usize,
        dim: usize,
        layer_count: usize,
        heads: usize,
        ffn_dim: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let token_embedding = store.normal(format!("{prefix}.token_embedding"), (vocab_size, dim), std, rng);
        let position_embedding = store.normal(format!("{prefix}.position_embedding"), (max_tokens, dim), std, rng);
        let embedding_norm = LayerNormIds::new(store, &format!("{prefix}.embedding_norm"), dim);
        let layers = (0..layer_count)
            .map(|l| EncoderLayer::new(store, &format!("{prefix}.layer{l}"), dim, heads, ffn_dim, std, rng))
            .collect();
        Self {
            token_embedding,
            position_embedding,
            embedding_norm,
            layers,
        }
    }

    /// Runs the stack over unpadded id sequences (each starting with `[CLS]`).
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        sequences: &[Vec<u32>],
        mut dropout: Option<Dropout<'_>>,
        noise: EmbeddingNoise<'_>,
    ) -> StackedStates {
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut segments = Vec::with_capacity(sequences.len());
        for seq in sequences {
            assert!(!seq.is_empty(), "empty sequence");
            let start = ids.len();
            ids.extend(seq.iter().map(|&t| t as usize));
            positions.extend(0..seq.len());
            segments.push(start..ids.len());
        }
        let tok = tape.param(store, self.token_embedding);
        let pos = tape.param(store, self.position_embedding);
        let t = tape.gather(tok, ids);
        let p = tape.gather(pos, positions);
        let x = tape.add(t, p);
        let x = self.embedding_norm.forward(tape, store, x);
        let mut x = maybe_dropout(tape, x, &mut dropout);
        if let EmbeddingNoise::Cutoff { rate, rng } = noise {
            let mut mask = Mat::ones(tape.value(x).dim());
            for seg in &segments {
                for r in super::augment::cutoff_rows(seg.len() - 1, rate, rng) {
                    mask.index_axis_mut(Axis(0), seg.start + 1 + r).fill(0.0);
                }
            }
            x = tape.mul_const(x, mask);
        }
        let mut layers = vec![x];
        for layer in &self.layers {
            x = layer.forward(tape, store, x, &segments, &mut dropout);
            layers.push(x);
        }
        StackedStates { layers, segments }
    }
}
