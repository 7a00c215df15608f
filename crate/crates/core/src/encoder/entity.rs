//! Entity encoders: map an entity's contextual token vectors to one vector.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::transformer::{AttentionBlock, Dropout, EncoderLayer, LayerNormIds, Linear};
use crate::autodiff::{Mat, Tape, Var};
use crate::params::{ParamId, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityEncoderVariant {
    /// Token average.
    Mean,
    /// Bidirectional LSTM, then average.
    Recurrent,
    /// Per-token affine map, then average.
    Affine,
    /// One transformer layer over the entity tokens, then average.
    #[default]
    SelfAttn,
    /// Entity tokens attend over the whole sentence, then average.
    CrossAttn,
}

impl EntityEncoderVariant {
    pub const ALL: [EntityEncoderVariant; 5] = [
        EntityEncoderVariant::Mean,
        EntityEncoderVariant::Recurrent,
        EntityEncoderVariant::Affine,
        EntityEncoderVariant::SelfAttn,
        EntityEncoderVariant::CrossAttn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityEncoderVariant::Mean => "mean",
            EntityEncoderVariant::Recurrent => "recurrent",
            EntityEncoderVariant::Affine => "affine",
            EntityEncoderVariant::SelfAttn => "self_attn",
            EntityEncoderVariant::CrossAttn => "cross_attn",
        }
    }
}

impl fmt::Display for EntityEncoderVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityEncoderVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| {
            Error::config(
                "entity_encoder",
                format!("unknown entity encoder {s:?} (mean, recurrent, affine, self_attn, cross_attn)"),
            )
        })
    }
}

#[derive(Clone, Debug)]
pub struct BiLstm {
    hidden: usize,
    forward_input: Linear,
    forward_recurrent: ParamId,
    backward_input: Linear,
    backward_recurrent: ParamId,
}

impl BiLstm {
    fn new(store: &mut ParamStore, prefix: &str, dim: usize, std: f64, rng: &mut ChaCha8Rng) -> Self {
        let hidden = dim / 2;
        Self {
            hidden,
            forward_input: Linear::new(store, &format!("{prefix}.forward_input"), dim, 4 * hidden, std, rng),
            forward_recurrent: store.normal(format!("{prefix}.forward_recurrent"), (hidden, 4 * hidden), std, rng),
            backward_input: Linear::new(store, &format!("{prefix}.backward_input"), dim, 4 * hidden, std, rng),
            backward_recurrent: store.normal(format!("{prefix}.backward_recurrent"), (hidden, 4 * hidden), std, rng),
        }
    }

    /// Hidden state per step, in `steps` order.
    fn run(&self, tape: &mut Tape, projected: Var, recurrent: Var, steps: impl Iterator<Item = usize>) -> Vec<(usize, Var)> {
        let h = self.hidden;
        let mut state = tape.constant(Mat::zeros((1, h)));
        let mut cell = tape.constant(Mat::zeros((1, h)));
        let mut out = Vec::new();
        for row in steps {
            let x = tape.gather(projected, vec![row]);
            let r = tape.matmul(state, recurrent);
            let z = tape.add(x, r);
            let i = tape.slice_cols(z, 0..h);
            let i = tape.sigmoid(i);
            let f = tape.slice_cols(z, h..2 * h);
            let f = tape.sigmoid(f);
            let g = tape.slice_cols(z, 2 * h..3 * h);
            let g = tape.tanh(g);
            let o = tape.slice_cols(z, 3 * h..4 * h);
            let o = tape.sigmoid(o);
            let keep = tape.mul(f, cell);
            let write = tape.mul(i, g);
            cell = tape.add(keep, write);
            let squashed = tape.tanh(cell);
            state = tape.mul(o, squashed);
            out.push((row, state));
        }
        out
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, segments: &[Range<usize>]) -> Var {
        let pf = self.forward_input.forward(tape, store, x);
        let pb = self.backward_input.forward(tape, store, x);
        let uf = tape.param(store, self.forward_recurrent);
        let ub = tape.param(store, self.backward_recurrent);
        let mut rows = Vec::new();
        for seg in segments {
            let fwd = self.run(tape, pf, uf, seg.clone());
            let mut bwd = self.run(tape, pb, ub, seg.clone().rev());
            bwd.reverse();
            for ((_, a), (_, b)) in fwd.into_iter().zip(bwd) {
                rows.push(tape.concat_cols(&[a, b]));
            }
        }
        tape.concat_rows(&rows)
    }
}

#[derive(Clone, Debug)]
pub enum EntityEncoder {
    Mean,
    Recurrent(BiLstm),
    Affine(Linear),
    SelfAttn(EncoderLayer),
    CrossAttn { attention: AttentionBlock, norm: LayerNormIds },
}

impl EntityEncoder {
    pub fn new(
        variant: EntityEncoderVariant,
        store: &mut ParamStore,
        dim: usize,
        heads: usize,
        ffn_dim: usize,
        std: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let prefix = "entity";
        match variant {
            EntityEncoderVariant::Mean => EntityEncoder::Mean,
            EntityEncoderVariant::Recurrent => EntityEncoder::Recurrent(BiLstm::new(store, prefix, dim, std, rng)),
            EntityEncoderVariant::Affine => {
                // Identity start: the untrained map reduces to the mean variant.
                let weight = store.insert(format!("{prefix}.affine.weight"), Mat::eye(dim));
                let bias = store.zeros(format!("{prefix}.affine.bias"), (1, dim));
                EntityEncoder::Affine(Linear { weight, bias })
            }
            EntityEncoderVariant::SelfAttn => {
                EntityEncoder::SelfAttn(EncoderLayer::new(store, &format!("{prefix}.layer"), dim, heads, ffn_dim, std, rng))
            }
            EntityEncoderVariant::CrossAttn => EntityEncoder::CrossAttn {
                attention: AttentionBlock::new(store, &format!("{prefix}.cross"), dim, heads, std, rng),
                norm: LayerNormIds::new(store, &format!("{prefix}.cross_norm"), dim),
            },
        }
    }

    pub fn variant(&self) -> EntityEncoderVariant {
        match self {
            EntityEncoder::Mean => EntityEncoderVariant::Mean,
            EntityEncoder::Recurrent(_) => EntityEncoderVariant::Recurrent,
            EntityEncoder::Affine(_) => EntityEncoderVariant::Affine,
            EntityEncoder::SelfAttn(_) => EntityEncoderVariant::SelfAttn,
            EntityEncoder::CrossAttn { .. } => EntityEncoderVariant::CrossAttn,
        }
    }

    /// Encodes stacked entity token rows; entity `i` owns `segments[i]`.
    /// `context` supplies sentence rows and, per entity, the row range of its
    /// sentence; only the cross-attention variant reads it.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokens: Var,
        segments: &[Range<usize>],
        context: Option<(Var, &[Range<usize>])>,
        dropout: &mut Option<Dropout<'_>>,
    ) -> Result<Var> {
        let per_token = match self {
            EntityEncoder::Mean => tokens,
            EntityEncoder::Recurrent(lstm) => lstm.forward(tape, store, tokens, segments),
            EntityEncoder::Affine(linear) => linear.forward(tape, store, tokens),
            EntityEncoder::SelfAttn(layer) => layer.forward(tape, store, tokens, segments, dropout),
            EntityEncoder::CrossAttn { attention, norm } => {
                let (sentence, kv) = context.ok_or_else(|| {
                    Error::InvalidInput("cross-attention entity encoder needs the sentence tokens".into())
                })?;
                if kv.len() != segments.len() {
                    return Err(Error::Shape(format!("{} entities but {} sentence contexts", segments.len(), kv.len())));
                }
                let a = attention.forward(tape, store, tokens, sentence, segments, kv);
                let a = super::transformer::maybe_dropout(tape, a, dropout);
                let x = tape.add(tokens, a);
                norm.forward(tape, store, x)
            }
        };
        Ok(tape.segment_mean(per_token, segments.to_vec()))
    }
}
