//! The optimisation loop with periodic evaluation and checkpointing.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::optim::Optimizer;
use super::step::{training_step, StepOutput, StepRngs};
use super::trace::{MetricRecord, MetricTrace};
use crate::batching::{make_batch, EpochStream};
use crate::corpus::{mix_split, CorpusSplit, DefinitionDictionary};
use crate::encoder::{Model, Vocab};
use crate::evaluation::{evaluate, srocc, score_pairs, StsPair};
use crate::{Error, Result};

/// Stream numbers of the per-run ChaCha generators. Parameter
/// initialisation seeds its own generator from the run seed.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const DROPOUT: u64 = 2;
    pub const ENTITY: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const BATCH: u64 = 5;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Everything a run reads besides its configuration.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub split: &'a CorpusSplit,
    pub dictionary: &'a DefinitionDictionary,
    pub train_pairs: &'a [StsPair],
    pub test_pairs: &'a [StsPair],
}

pub struct TrainOutcome {
    pub model: Model,
    pub trace: MetricTrace,
}

/// Vocabulary over every corpus sentence and every definition.
pub fn build_vocab(split: &CorpusSplit, dict: &DefinitionDictionary, min_count: usize) -> Vocab {
    let definitions: Vec<Vec<String>> = dict.entries().map(|(_, e)| crate::corpus::tokenize(&e.definition)).collect();
    Vocab::build(
        split
            .s_all
            .iter()
            .map(|s| s.sentence.tokens.as_slice())
            .chain(definitions.iter().map(Vec::as_slice)),
        min_count,
    )
}

/// Largest training-set size the pools support at `ent_fraction`.
pub fn max_train_sentences(split: &CorpusSplit, ent_fraction: f64) -> usize {
    let (ent, none) = (split.s_ent.len(), split.s_none.len());
    let fits = |t: usize| {
        let n_ent = (t as f64 * ent_fraction).round() as usize;
        n_ent <= ent && t - n_ent <= none
    };
    let mut t = ent + none;
    while t > 0 && !fits(t) {
        t -= 1;
    }
    t
}

fn eval_record(model: &Model, cfg: &TrainConfig, data: &TrainData<'_>, step: usize, last: Option<&StepOutput>) -> Result<MetricRecord> {
    let train_scores = score_pairs(model, cfg.pooling, data.train_pairs, false)?;
    let gold: Vec<f64> = data.train_pairs.iter().map(|p| p.gold).collect();
    let report = evaluate(model, cfg.pooling, data.test_pairs, false)?;
    Ok(MetricRecord {
        step,
        train_srocc: srocc(&train_scores, &gold)?,
        test_srocc: report.srocc,
        loss: last.map(|o| o.loss),
        sentence_loss: last.map(|o| o.sentence_loss),
        entity_loss: last.and_then(|o| o.entity_loss),
        alignment: report.alignment,
        uniformity: report.uniformity,
    })
}

/// Trains one run. With `checkpoint_dir` set, `last.ckpt` is rewritten at
/// every evaluation and `best.ckpt` whenever train SROCC strictly improves.
pub fn train(cfg: &TrainConfig, data: &TrainData<'_>, seed: u64, checkpoint_dir: Option<&Path>) -> Result<TrainOutcome> {
    train_with(cfg, data, seed, checkpoint_dir, |_| {})
}

/// [`train`] with a callback invoked on every new trace record.
pub fn train_with(
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    seed: u64,
    checkpoint_dir: Option<&Path>,
    mut on_record: impl FnMut(&MetricRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train_pairs.is_empty() || data.test_pairs.is_empty() {
        return Err(Error::InvalidInput("train and test STS pairs are required".into()));
    }
    let vocab = build_vocab(data.split, data.dictionary, cfg.vocab_min_count);
    let mut model = Model::new(cfg.encoder.clone(), vocab, seed)?;
    let total = match cfg.train_sentences {
        0 => max_train_sentences(data.split, cfg.ent_fraction),
        n => n,
    };
    let corpus = mix_split(data.split, cfg.ent_fraction, total, seed)?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("training corpus is empty".into()));
    }
    log::info!("seed {seed}: {} training sentences, {} parameters", corpus.len(), model.params().scalar_count());
    let mut stream = EpochStream::new(corpus, stream_rng(seed, streams::DATA));
    let mut batch_rng = stream_rng(seed, streams::BATCH);
    let mut rngs = StepRngs {
        dropout: stream_rng(seed, streams::DROPOUT),
        entity: stream_rng(seed, streams::ENTITY),
        augment: stream_rng(seed, streams::AUGMENT),
    };
    let frozen = if cfg.freeze_definition_encoder {
        model.definition_param_ids().to_vec()
    } else {
        Vec::new()
    };
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, frozen);
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let mut trace = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut record = |model: &Model, step: usize, last: Option<&StepOutput>, trace: &mut MetricTrace| -> Result<()> {
        let r = eval_record(model, cfg, data, step, last)?;
        if let Some(dir) = checkpoint_dir {
            model.save(&dir.join("last.ckpt"))?;
            if r.train_srocc > best {
                model.save(&dir.join("best.ckpt"))?;
            }
        }
        best = best.max(r.train_srocc);
        log::info!("step {step}: train {:.4} test {:.4}", r.train_srocc, r.test_srocc);
        on_record(&r);
        trace.push(r);
        Ok(())
    };
    record(&model, 0, None, &mut trace)?;
    for step in 1..=cfg.total_steps {
        let batch = make_batch(&mut stream, cfg.batch_size, cfg.strategy, &data.split.s_ent, &mut batch_rng)?;
        let out = training_step(&model, cfg, &batch, data.dictionary, &mut rngs, step)?;
        optimizer.step(model.params_mut(), &out.grads);
        if step % cfg.eval_every == 0 || step == cfg.total_steps {
            record(&model, step, Some(&out), &mut trace)?;
        }
    }
    Ok(TrainOutcome { model, trace })
}
