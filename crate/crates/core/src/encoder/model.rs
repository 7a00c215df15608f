//! The trainable model: main encoder, definition encoder and entity encoder
//! sharing one parameter store, plus the checkpoint format.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! b"ENTCLCK1"          magic
//! u64                  header length in bytes
//! header               JSON {config, vocab, tensors: [{name, rows, cols}]}
//! f64 × Σ rows·cols    tensor values, row-major, in header order
//! ```

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::entity::{EntityEncoder, EntityEncoderVariant};
use super::pooling::{pool_stacked, unstack, EntityEmbedding, PoolingStrategy, SentenceEmbedding, TokenEmbeddings};
use super::transformer::{Dropout, EmbeddingNoise, StackedStates, Transformer};
use super::vocab::{Vocab, PAD};
use crate::autodiff::{Mat, Tape};
use crate::corpus::tokenize;
use crate::params::{ParamId, ParamStore};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ENTCLCK1";

/// Sentences per forward pass when embedding for evaluation.
pub const EMBED_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
    pub layer_count: usize,
    pub head_count: usize,
    pub ffn_dim: usize,
    pub dropout_rate: f64,
    pub max_tokens: usize,
    pub init_std: f64,
    pub entity_encoder: EntityEncoderVariant,
    /// Share weights between the main and definition encoders.
    pub tie_definition_encoder: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            layer_count: 2,
            head_count: 4,
            ffn_dim: 128,
            dropout_rate: 0.1,
            max_tokens: 128,
            init_std: 0.02,
            entity_encoder: EntityEncoderVariant::SelfAttn,
            tie_definition_encoder: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.head_count == 0 || !self.hidden_dim.is_multiple_of(self.head_count) {
            return Err(Error::config("encoder.head_count", "hidden_dim must be a positive multiple of head_count"));
        }
        if self.entity_encoder == EntityEncoderVariant::Recurrent && !self.hidden_dim.is_multiple_of(2) {
            return Err(Error::config("encoder.hidden_dim", "the recurrent entity encoder needs an even hidden_dim"));
        }
        if self.max_tokens < 2 {
            return Err(Error::config("encoder.max_tokens", "must leave room for [CLS] and one token"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("encoder.dropout_rate", "must lie in [0, 1)"));
        }
        if self.ffn_dim == 0 || !(self.init_std > 0.0) {
            return Err(Error::config("encoder.ffn_dim", "ffn_dim and init_std must be positive"));
        }
        Ok(())
    }
}

/// Which transformer stack to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stack {
    Main,
    Definition,
}

#[derive(Clone, Debug)]
pub struct Model {
    config: EncoderConfig,
    vocab: Vocab,
    params: ParamStore,
    main: Transformer,
    definition: Transformer,
    entity: EntityEncoder,
    definition_ids: Vec<ParamId>,
    entity_ids: Vec<ParamId>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: EncoderConfig,
    vocab: Vocab,
    tensors: Vec<TensorHeader>,
}

impl Model {
    pub fn new(config: EncoderConfig, vocab: Vocab, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut params = ParamStore::default();
        let c = &config;
        let build = |params: &mut ParamStore, prefix: &str, rng: &mut ChaCha8Rng| {
            Transformer::new(
                params,
                prefix,
                vocab.len(),
                c.max_tokens,
                c.hidden_dim,
                c.layer_count,
                c.head_count,
                c.ffn_dim,
                c.init_std,
                rng,
            )
        };
        let main = build(&mut params, "main", &mut rng);
        let mark = params.len();
        let definition = if c.tie_definition_encoder {
            main.clone()
        } else {
            build(&mut params, "definition", &mut rng)
        };
        let definition_ids = params.ids().skip(mark).collect();
        let mark = params.len();
        let entity = EntityEncoder::new(c.entity_encoder, &mut params, c.hidden_dim, c.head_count, c.ffn_dim, c.init_std, &mut rng);
        let entity_ids = params.ids().skip(mark).collect();
        Ok(Self {
            config,
            vocab,
            params,
            main,
            definition,
            entity,
            definition_ids,
            entity_ids,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Parameters owned only by the definition encoder (empty when tied).
    pub fn definition_param_ids(&self) -> &[ParamId] {
        &self.definition_ids
    }

    pub fn entity_param_ids(&self) -> &[ParamId] {
        &self.entity_ids
    }

    pub fn entity_encoder(&self) -> &EntityEncoder {
        &self.entity
    }

    /// `[CLS]` + word ids for raw text, truncated to `max_tokens`.
    pub fn token_ids(&self, text: &str) -> Vec<u32> {
        self.vocab.encode(&tokenize(text), self.config.max_tokens)
    }

    pub fn forward(
        &self,
        stack: Stack,
        tape: &mut Tape,
        sequences: &[Vec<u32>],
        dropout: Option<Dropout<'_>>,
        noise: EmbeddingNoise<'_>,
    ) -> StackedStates {
        let t = match stack {
            Stack::Main => &self.main,
            Stack::Definition => &self.definition,
        };
        t.forward(tape, &self.params, sequences, dropout, noise)
    }

    fn strip(&self, seq: &[u32]) -> Vec<u32> {
        let valid = seq.iter().position(|&t| t == PAD).unwrap_or(seq.len());
        let keep = valid.min(self.config.max_tokens);
        if keep < valid {
            log::debug!("truncating sequence of {valid} tokens to {keep}");
        }
        seq[..keep].to_vec()
    }

    /// Main-encoder token states for a batch of id sequences. Trailing
    /// `[PAD]` ids are masked; sequences longer than `max_tokens` are cut.
    pub fn encode(&self, batch: &[Vec<u32>], dropout_active: bool, rng: &mut ChaCha8Rng) -> Result<Vec<TokenEmbeddings>> {
        let stripped: Vec<Vec<u32>> = batch.iter().map(|s| self.strip(s)).collect();
        if stripped.iter().any(Vec::is_empty) {
            return Err(Error::EmptySequence);
        }
        let mut tape = Tape::new();
        let dropout = dropout_active.then_some(Dropout {
            rate: self.config.dropout_rate,
            rng,
        });
        let states = self.forward(Stack::Main, &mut tape, &stripped, dropout, EmbeddingNoise::None);
        let lengths: Vec<usize> = batch.iter().map(Vec::len).collect();
        Ok(unstack(&tape, &states, &lengths))
    }

    /// Dropout-free pooled embeddings of raw sentences, in input order,
    /// computed in fixed chunks of [`EMBED_CHUNK`].
    pub fn embed_sentences<S: AsRef<str>>(&self, texts: &[S], pooling: PoolingStrategy) -> Result<Vec<SentenceEmbedding>> {
        self.embed_with(Stack::Main, texts, pooling)
    }

    pub fn embed_definitions<S: AsRef<str>>(&self, texts: &[S], pooling: PoolingStrategy) -> Result<Vec<SentenceEmbedding>> {
        self.embed_with(Stack::Definition, texts, pooling)
    }

    fn embed_with<S: AsRef<str>>(&self, stack: Stack, texts: &[S], pooling: PoolingStrategy) -> Result<Vec<SentenceEmbedding>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(EMBED_CHUNK) {
            let ids: Vec<Vec<u32>> = chunk.iter().map(|t| self.token_ids(t.as_ref())).collect();
            if let Some(i) = ids.iter().position(|s| s.len() < 2) {
                return Err(Error::InvalidInput(format!("sentence {:?} has no tokens", chunk[i].as_ref())));
            }
            let mut tape = Tape::new();
            let states = self.forward(stack, &mut tape, &ids, None, EmbeddingNoise::None);
            let pooled = pool_stacked(&mut tape, &states, pooling);
            out.extend(tape.value(pooled).rows().into_iter().map(|r| r.to_owned()));
        }
        Ok(out)
    }

    /// Entity embedding from already-extracted token vectors.
    pub fn entity_encode(&self, entity_tokens: &Mat, sentence_tokens: Option<&Mat>) -> Result<EntityEmbedding> {
        if entity_tokens.nrows() == 0 {
            return Err(Error::InvalidInput("entity has no tokens".into()));
        }
        let mut tape = Tape::new();
        let e = tape.constant(entity_tokens.clone());
        let seg: Vec<Range<usize>> = vec![0..entity_tokens.nrows()];
        let ctx_seg: Vec<Range<usize>>;
        let context = match sentence_tokens {
            Some(s) => {
                ctx_seg = vec![0..s.nrows()];
                Some((tape.constant(s.clone()), ctx_seg.as_slice()))
            }
            None => None,
        };
        let out = self.entity.forward(&mut tape, &self.params, e, &seg, context, &mut None)?;
        Ok(tape.value(out).row(0).to_owned())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            tensors: self
                .params
                .ids()
                .map(|id| {
                    let v = self.params.value(id);
                    TensorHeader {
                        name: self.params.name(id).to_string(),
                        rows: v.nrows(),
                        cols: v.ncols(),
                    }
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut buf = Vec::with_capacity(16 + json.len() + 8 * self.params.scalar_count());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for id in self.params.ids() {
            for v in self.params.value(id).iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = 16usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body]).map_err(|e| bad(&e.to_string()))?;
        let mut model = Model::new(header.config, header.vocab, 0)?;
        if header.tensors.len() != model.params.len() {
            return Err(bad("tensor count does not match the configuration"));
        }
        let mut offset = body;
        let ids: Vec<ParamId> = model.params.ids().collect();
        for (id, t) in ids.into_iter().zip(&header.tensors) {
            let target = model.params.value_mut(id);
            if target.dim() != (t.rows, t.cols) {
                return Err(bad(&format!("tensor {} has shape {}x{}, expected {:?}", t.name, t.rows, t.cols, target.dim())));
            }
            let n = t.rows * t.cols * 8;
            let chunk = bytes.get(offset..offset + n).ok_or_else(|| bad("truncated tensor data"))?;
            for (dst, src) in target.iter_mut().zip(chunk.chunks_exact(8)) {
                *dst = f64::from_le_bytes(src.try_into().expect("8 bytes"));
            }
            offset += n;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after tensor data"));
        }
        for (id, t) in model.params.ids().zip(&header.tensors) {
            if model.params.name(id) != t.name {
                return Err(bad(&format!("tensor {} found where {} expected", t.name, model.params.name(id))));
            }
        }
        Ok(model)
    }
}
