//! Sentence pooling and entity-token extraction.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Axis};
use serde::{Deserialize, Serialize};

use super::transformer::StackedStates;
use crate::autodiff::{Mat, Tape, Var};
use crate::corpus::TokenSpan;
use crate::{Error, Result};

pub type SentenceEmbedding = Array1<f64>;
pub type EntityEmbedding = Array1<f64>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingStrategy {
    /// Final-layer `[CLS]` vector.
    Cls,
    /// Mean of final-layer valid tokens.
    LastAvg,
    /// Mean of the first-layer and final-layer token means.
    #[default]
    FirstLastAvg,
}

impl PoolingStrategy {
    pub const ALL: [PoolingStrategy; 3] = [PoolingStrategy::Cls, PoolingStrategy::LastAvg, PoolingStrategy::FirstLastAvg];

    pub fn as_str(self) -> &'static str {
        match self {
            PoolingStrategy::Cls => "cls",
            PoolingStrategy::LastAvg => "last_avg",
            PoolingStrategy::FirstLastAvg => "first_last_avg",
        }
    }
}

impl fmt::Display for PoolingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoolingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config("pooling", format!("unknown pooling {s:?} (cls, last_avg, first_last_avg)")))
    }
}

/// Per-layer token vectors of one (possibly padded) sequence.
/// `per_layer[0]` is the embedding output; padded rows are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenEmbeddings {
    pub per_layer: Vec<Mat>,
    pub attention_mask: Vec<bool>,
}

impl TokenEmbeddings {
    pub fn token_count(&self) -> usize {
        self.attention_mask.len()
    }

    pub fn valid_count(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m).count()
    }

    fn last(&self) -> &Mat {
        self.per_layer.last().expect("at least the embedding layer")
    }

    fn first(&self) -> &Mat {
        &self.per_layer[1.min(self.per_layer.len() - 1)]
    }

    fn masked_mean(&self, m: &Mat) -> Result<Array1<f64>> {
        let n = self.valid_count();
        if n == 0 {
            return Err(Error::EmptySequence);
        }
        let mut sum = Array1::zeros(m.ncols());
        for (row, &valid) in m.rows().into_iter().zip(&self.attention_mask) {
            if valid {
                sum += &row;
            }
        }
        Ok(sum.mapv(|v| v / n as f64))
    }
}

pub fn pool_sentence(te: &TokenEmbeddings, strategy: PoolingStrategy) -> Result<SentenceEmbedding> {
    match strategy {
        PoolingStrategy::Cls => {
            let first_valid = te.attention_mask.iter().position(|&m| m).ok_or(Error::EmptySequence)?;
            Ok(te.last().row(first_valid).to_owned())
        }
        PoolingStrategy::LastAvg => te.masked_mean(te.last()),
        PoolingStrategy::FirstLastAvg => {
            let a = te.masked_mean(te.first())?;
            let b = te.masked_mean(te.last())?;
            Ok((a + b).mapv(|v| v * 0.5))
        }
    }
}

/// Span rows under the layer combination that matches `strategy`: final
/// layer for `cls` and `last_avg`, per-token first/last mean for
/// `first_last_avg`. `span` indexes `te` positions directly.
pub fn extract_entity_tokens(te: &TokenEmbeddings, span: TokenSpan, strategy: PoolingStrategy) -> Result<Mat> {
    if span.end > te.token_count() || !te.attention_mask[span.start..span.end].iter().all(|&m| m) {
        return Err(Error::InvalidInput(format!(
            "span {}..{} outside the valid region of {} tokens",
            span.start,
            span.end,
            te.valid_count()
        )));
    }
    let last = te.last().slice(s![span.start..span.end, ..]);
    Ok(match strategy {
        PoolingStrategy::Cls | PoolingStrategy::LastAvg => last.to_owned(),
        PoolingStrategy::FirstLastAvg => {
            let first = te.first().slice(s![span.start..span.end, ..]);
            (&first + &last).mapv(|v| v * 0.5)
        }
    })
}

/// Tape version of [`pool_sentence`] over a stacked batch: one row per sequence.
pub fn pool_stacked(tape: &mut Tape, states: &StackedStates, strategy: PoolingStrategy) -> Var {
    let last = *states.layers.last().expect("embedding layer");
    match strategy {
        PoolingStrategy::Cls => {
            let rows = states.segments.iter().map(|s| s.start).collect();
            tape.gather(last, rows)
        }
        PoolingStrategy::LastAvg => tape.segment_mean(last, states.segments.clone()),
        PoolingStrategy::FirstLastAvg => {
            let first = states.layers[1.min(states.layers.len() - 1)];
            let a = tape.segment_mean(first, states.segments.clone());
            let b = tape.segment_mean(last, states.segments.clone());
            let sum = tape.add(a, b);
            tape.scale(sum, 0.5)
        }
    }
}

/// Tape version of the per-token layer combination, all stacked rows.
pub fn combine_layers(tape: &mut Tape, states: &StackedStates, strategy: PoolingStrategy) -> Var {
    let last = *states.layers.last().expect("embedding layer");
    match strategy {
        PoolingStrategy::Cls | PoolingStrategy::LastAvg => last,
        PoolingStrategy::FirstLastAvg => {
            let first = states.layers[1.min(states.layers.len() - 1)];
            let sum = tape.add(first, last);
            tape.scale(sum, 0.5)
        }
    }
}

/// Unstacks tape states into per-sequence [`TokenEmbeddings`], padding each
/// to `padded_lengths[i]` rows.
pub fn unstack(tape: &Tape, states: &StackedStates, padded_lengths: &[usize]) -> Vec<TokenEmbeddings> {
    states
        .segments
        .iter()
        .zip(padded_lengths)
        .map(|(seg, &len)| {
            let per_layer = states
                .layers
                .iter()
                .map(|&l| {
                    let v = tape.value(l);
                    let mut m = Mat::zeros((len.max(seg.len()), v.ncols()));
                    m.slice_mut(s![..seg.len(), ..]).assign(&v.slice(s![seg.clone(), ..]));
                    m
                })
                .collect::<Vec<_>>();
            let rows = per_layer[0].len_of(Axis(0));
            let attention_mask = (0..rows).map(|i| i < seg.len()).collect();
            TokenEmbeddings {
                per_layer,
                attention_mask,
            }
        })
        .collect()
}
