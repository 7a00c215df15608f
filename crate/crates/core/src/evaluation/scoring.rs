//! Scoring gold pairs with a model and the diagnostics report.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::metrics::{alignment, srocc, uniformity};
use super::sts::StsPair;
use super::whitening::Whitener;
use crate::autodiff::Mat;
use crate::encoder::{Model, PoolingStrategy, SentenceEmbedding};
use crate::losses::cosine_similarity;
use crate::{Error, Result};

/// Pairs with gold at or above this score count as positives for alignment.
pub const POSITIVE_GOLD: f64 = 4.0;

/// Embeds every distinct sentence of `pairs` once, in sorted order.
pub fn embed_pair_sentences(
    model: &Model,
    pooling: PoolingStrategy,
    pairs: &[StsPair],
    whiten: bool,
) -> Result<BTreeMap<String, SentenceEmbedding>> {
    for (i, p) in pairs.iter().enumerate() {
        for s in [&p.sentence1, &p.sentence2] {
            if crate::corpus::tokenize(s).is_empty() {
                return Err(Error::InvalidInput(format!("pair {i}: sentence {s:?} has no tokens")));
            }
        }
    }
    let unique: Vec<&str> = pairs
        .iter()
        .flat_map(|p| [p.sentence1.as_str(), p.sentence2.as_str()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut vectors = model.embed_sentences(&unique, pooling)?;
    if whiten {
        let d = model.config().hidden_dim;
        let x = Mat::from_shape_fn((vectors.len(), d), |(i, j)| vectors[i][j]);
        let w = Whitener::fit(&x)?.apply(&x);
        vectors = w.rows().into_iter().map(|r| r.to_owned()).collect();
    }
    Ok(unique.into_iter().map(String::from).zip(vectors).collect())
}

/// Cosine similarity per pair, in input order.
pub fn score_pairs(model: &Model, pooling: PoolingStrategy, pairs: &[StsPair], whiten: bool) -> Result<Vec<f64>> {
    let emb = embed_pair_sentences(model, pooling, pairs, whiten)?;
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            cosine_similarity(emb[&p.sentence1].view(), emb[&p.sentence2].view())
                .map_err(|e| Error::InvalidInput(format!("pair {i}: {e}")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub srocc: f64,
    /// `None` when no pair reaches [`POSITIVE_GOLD`].
    pub alignment: Option<f64>,
    pub uniformity: f64,
    pub pair_count: usize,
    pub whitened: bool,
    pub pooling: PoolingStrategy,
}

pub fn evaluate(model: &Model, pooling: PoolingStrategy, pairs: &[StsPair], whiten: bool) -> Result<DiagnosticsReport> {
    let emb = embed_pair_sentences(model, pooling, pairs, whiten)?;
    let sims = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            cosine_similarity(emb[&p.sentence1].view(), emb[&p.sentence2].view())
                .map_err(|e| Error::InvalidInput(format!("pair {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    let positives: Vec<(ArrayView1<f64>, ArrayView1<f64>)> = pairs
        .iter()
        .filter(|p| p.gold >= POSITIVE_GOLD)
        .map(|p| (emb[&p.sentence1].view(), emb[&p.sentence2].view()))
        .collect();
    let all: Vec<ArrayView1<f64>> = emb.values().map(|v| v.view()).collect();
    Ok(DiagnosticsReport {
        srocc: srocc(&sims, &gold)?,
        alignment: if positives.is_empty() { None } else { Some(alignment(&positives)?) },
        uniformity: uniformity(&all)?,
        pair_count: pairs.len(),
        whitened: whiten,
        pooling,
    })
}
