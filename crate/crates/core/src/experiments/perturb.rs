//! Controls that break the entity/definition correspondence on purpose.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenSpan;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    #[default]
    None,
    /// Entity spans moved to random positions of the same length.
    RandomTokenIndices,
    /// Entity embeddings permuted across the batch so no entity meets its
    /// own definition.
    ShuffleSentenceEmbeddings,
    /// Entity embedding replaced by the pooled sentence embedding.
    SentencePooling,
}

impl PerturbationMode {
    pub const ALL: [PerturbationMode; 4] = [
        PerturbationMode::None,
        PerturbationMode::RandomTokenIndices,
        PerturbationMode::ShuffleSentenceEmbeddings,
        PerturbationMode::SentencePooling,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationMode::None => "none",
            PerturbationMode::RandomTokenIndices => "random_token_indices",
            PerturbationMode::ShuffleSentenceEmbeddings => "shuffle_sentence_embeddings",
            PerturbationMode::SentencePooling => "sentence_pooling",
        }
    }
}

impl fmt::Display for PerturbationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("perturbation", format!("unknown perturbation {s:?}")))
    }
}

/// Entity-path inputs for the `S^k` members of one batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityPipelineState {
    /// Span of each member in encoder positions (`[CLS]` is position 0).
    pub spans: Vec<TokenSpan>,
    /// Encoded length of each member's sentence, `[CLS]` included.
    pub sequence_lengths: Vec<usize>,
    /// Row `i` of the entity embeddings is taken from member `entity_order[i]`.
    pub entity_order: Vec<usize>,
    /// Use the pooled sentence embedding as the entity embedding.
    pub use_sentence_embedding: bool,
}

impl EntityPipelineState {
    pub fn new(spans: Vec<TokenSpan>, sequence_lengths: Vec<usize>) -> Self {
        let n = spans.len();
        Self {
            spans,
            sequence_lengths,
            entity_order: (0..n).collect(),
            use_sentence_embedding: false,
        }
    }
}

/// Uniform random permutation of `0..n` without fixed points (`n ≥ 2`).
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    assert!(n >= 2, "no derangement of {n} elements");
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &v)| i != v) {
            return p;
        }
    }
}

pub fn apply_perturbation<R: Rng + ?Sized>(mode: PerturbationMode, state: &mut EntityPipelineState, rng: &mut R) {
    match mode {
        PerturbationMode::None => {}
        PerturbationMode::RandomTokenIndices => {
            for (span, &len) in state.spans.iter_mut().zip(&state.sequence_lengths) {
                let width = span.len();
                // Word positions are 1..len.
                if len > width {
                    let start = rng.random_range(1..=len - width);
                    *span = TokenSpan::new(start, start + width);
                }
            }
        }
        PerturbationMode::ShuffleSentenceEmbeddings => {
            if state.spans.len() < 2 {
                log::debug!("single entity in batch; shuffle perturbation skipped");
            } else {
                state.entity_order = derangement(state.spans.len(), rng);
            }
        }
        PerturbationMode::SentencePooling => state.use_sentence_embedding = true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(n: usize) -> EntityPipelineState {
        EntityPipelineState::new((0..n).map(|i| TokenSpan::new(1 + i % 3, 2 + i % 3)).collect(), vec![8; n])
    }

    #[test]
    fn none_is_identity() {
        let mut s = state(5);
        let before = s.clone();
        apply_perturbation(PerturbationMode::None, &mut s, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(s, before);
    }

    #[test]
    fn shuffle_degenerate_and_deranged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut one = state(1);
        apply_perturbation(PerturbationMode::ShuffleSentenceEmbeddings, &mut one, &mut rng);
        assert_eq!(one.entity_order, [0]);
        for n in 2..10 {
            let mut s = state(n);
            apply_perturbation(PerturbationMode::ShuffleSentenceEmbeddings, &mut s, &mut rng);
            assert!(s.entity_order.iter().enumerate().all(|(i, &j)| i != j));
            let mut sorted = s.entity_order.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn random_spans_keep_width_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = EntityPipelineState::new(vec![TokenSpan::new(2, 4), TokenSpan::new(1, 2)], vec![6, 3]);
        for _ in 0..100 {
            apply_perturbation(PerturbationMode::RandomTokenIndices, &mut s, &mut rng);
            assert_eq!(s.spans[0].len(), 2);
            assert!(s.spans[0].start >= 1 && s.spans[0].end <= 6);
            assert!(s.spans[1].start >= 1 && s.spans[1].end <= 3);
        }
    }

    #[test]
    fn sentence_pooling_flag() {
        let mut s = state(3);
        apply_perturbation(PerturbationMode::SentencePooling, &mut s, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(s.use_sentence_embedding);
    }
}
