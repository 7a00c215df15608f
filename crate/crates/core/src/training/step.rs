//! Forward and backward pass of one training batch.

use std::ops::Range;

use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use crate::autodiff::{Mat, Tape, Var};
use crate::batching::Batch;
use crate::corpus::{DefinitionDictionary, TokenSpan};
use crate::encoder::{
    combine_layers, pool_stacked, token_shuffle, AugmentMode, Dropout, EmbeddingNoise, Model, Stack, StackedStates,
};
use crate::experiments::{apply_perturbation, EntityPipelineState};
use crate::losses::info_nce_on_tape;
use crate::params::ParamId;
use crate::{Error, Result};

/// Independent noise streams consumed by a step.
pub struct StepRngs {
    pub dropout: ChaCha8Rng,
    pub entity: ChaCha8Rng,
    pub augment: ChaCha8Rng,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub sentence_loss: f64,
    /// `None` when the entity path did not run.
    pub entity_loss: Option<f64>,
    /// Size of the entity subset that reached the loss.
    pub entity_count: usize,
    pub grads: Vec<(ParamId, Mat)>,
}

/// Entity members of a batch whose span survives truncation, as
/// `(batch index, span in encoder positions, entity id)`.
fn usable_entities(batch: &Batch, ids: &[Vec<u32>]) -> Vec<(usize, TokenSpan, String)> {
    batch
        .entity_subset_indices
        .iter()
        .filter_map(|&b| {
            let m = batch.assignments[b].as_ref()?;
            let span = TokenSpan::new(m.span.start + 1, m.span.end + 1);
            if span.is_empty() || span.end > ids[b].len() {
                log::debug!("entity {} truncated away in {}", m.entity_id, batch.sentences[b].sentence.id);
                return None;
            }
            Some((b, span, m.entity_id.clone()))
        })
        .collect()
}

fn second_view(
    model: &Model,
    cfg: &TrainConfig,
    tape: &mut Tape,
    ids: &[Vec<u32>],
    rngs: &mut StepRngs,
) -> StackedStates {
    let rate = model.config().dropout_rate;
    match cfg.augment {
        AugmentMode::Dropout => {
            let d = Dropout { rate, rng: &mut rngs.dropout };
            model.forward(Stack::Main, tape, ids, Some(d), EmbeddingNoise::None)
        }
        AugmentMode::Cutoff => {
            let noise = EmbeddingNoise::Cutoff {
                rate: cfg.cutoff_rate,
                rng: &mut rngs.augment,
            };
            model.forward(Stack::Main, tape, ids, None, noise)
        }
        AugmentMode::Shuffle => {
            let shuffled: Vec<Vec<u32>> = ids.iter().map(|s| token_shuffle(s, &mut rngs.augment)).collect();
            model.forward(Stack::Main, tape, &shuffled, None, EmbeddingNoise::None)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn entity_embeddings(
    model: &Model,
    cfg: &TrainConfig,
    tape: &mut Tape,
    states: &StackedStates,
    pooled: Var,
    members: &[(usize, TokenSpan, String)],
    ids: &[Vec<u32>],
    rng: &mut ChaCha8Rng,
) -> Result<Var> {
    let mut state = EntityPipelineState::new(
        members.iter().map(|m| m.1).collect(),
        members.iter().map(|m| ids[m.0].len()).collect(),
    );
    apply_perturbation(cfg.perturbation, &mut state, rng);
    let h_ent = if state.use_sentence_embedding {
        tape.gather(pooled, members.iter().map(|m| m.0).collect())
    } else {
        let tokens = combine_layers(tape, states, cfg.pooling);
        let mut rows = Vec::new();
        let mut segments: Vec<Range<usize>> = Vec::new();
        for (m, span) in members.iter().zip(&state.spans) {
            let base = states.segments[m.0].start;
            let start = rows.len();
            rows.extend((span.start..span.end).map(|p| base + p));
            segments.push(start..rows.len());
        }
        let entity_tokens = tape.gather(tokens, rows);
        let mut ctx_rows = Vec::new();
        let mut ctx_segments = Vec::new();
        for m in members {
            let seg = states.segments[m.0].clone();
            let start = ctx_rows.len();
            ctx_rows.extend(seg);
            ctx_segments.push(start..ctx_rows.len());
        }
        let context = tape.gather(tokens, ctx_rows);
        let mut dropout = Some(Dropout {
            rate: model.config().dropout_rate,
            rng: &mut *rng,
        });
        model
            .entity_encoder()
            .forward(tape, model.params(), entity_tokens, &segments, Some((context, &ctx_segments)), &mut dropout)?
    };
    Ok(if state.entity_order.iter().enumerate().all(|(i, &j)| i == j) {
        h_ent
    } else {
        tape.gather(h_ent, state.entity_order.clone())
    })
}

/// Loss and parameter gradients for one batch. `step` is only used in the
/// non-finite loss diagnostic.
pub fn training_step(
    model: &Model,
    cfg: &TrainConfig,
    batch: &Batch,
    dict: &DefinitionDictionary,
    rngs: &mut StepRngs,
    step: usize,
) -> Result<StepOutput> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let max_tokens = model.config().max_tokens;
    let ids: Vec<Vec<u32>> = batch
        .sentences
        .iter()
        .map(|s| model.vocab().encode(&s.sentence.tokens, max_tokens))
        .collect();
    if let Some(i) = ids.iter().position(|s| s.len() < 2) {
        return Err(Error::InvalidInput(format!("sentence {} has no tokens", batch.sentences[i].sentence.id)));
    }
    let loss_cfg = cfg.loss();
    let mut tape = Tape::new();
    let first = {
        let d = Dropout {
            rate: model.config().dropout_rate,
            rng: &mut rngs.dropout,
        };
        model.forward(Stack::Main, &mut tape, &ids, Some(d), EmbeddingNoise::None)
    };
    let second = second_view(model, cfg, &mut tape, &ids, rngs);
    let h = pool_stacked(&mut tape, &first, cfg.pooling);
    let h_plus = pool_stacked(&mut tape, &second, cfg.pooling);
    let l_sen = info_nce_on_tape(&mut tape, h, h_plus, &loss_cfg);

    let members = if cfg.entity_module { usable_entities(batch, &ids) } else { Vec::new() };
    let mut l_ent = None;
    if !members.is_empty() {
        let h_ent = entity_embeddings(model, cfg, &mut tape, &first, h, &members, &ids, &mut rngs.entity)?;
        let definitions: Vec<Vec<u32>> = members
            .iter()
            .map(|m| {
                dict.definition(&m.2)
                    .map(|d| model.token_ids(d))
                    .ok_or_else(|| Error::InvalidInput(format!("entity {} has no definition", m.2)))
            })
            .collect::<Result<_>>()?;
        if definitions.iter().any(|d| d.len() < 2) {
            return Err(Error::InvalidInput("empty definition".into()));
        }
        let d = Dropout {
            rate: model.config().dropout_rate,
            rng: &mut rngs.entity,
        };
        let def_states = model.forward(Stack::Definition, &mut tape, &definitions, Some(d), EmbeddingNoise::None);
        let h_def = pool_stacked(&mut tape, &def_states, cfg.pooling);
        l_ent = Some(info_nce_on_tape(&mut tape, h_ent, h_def, &loss_cfg));
    }
    let loss = match l_ent {
        Some(e) => {
            let weighted = tape.scale(e, loss_cfg.lambda);
            tape.add(l_sen, weighted)
        }
        None => l_sen,
    };
    let sentence_loss = tape.scalar(l_sen);
    let entity_loss = l_ent.map(|e| tape.scalar(e));
    let total = tape.scalar(loss);
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            sentence_loss,
            entity_loss: entity_loss.unwrap_or(0.0),
        });
    }
    let grads = tape.backward(loss);
    Ok(StepOutput {
        loss: total,
        sentence_loss,
        entity_loss,
        entity_count: members.len(),
        grads: tape.param_grads(&grads),
    })
}
