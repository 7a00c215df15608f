//! Transformer encoders, pooling, entity encoders and augmentations.

pub mod augment;
pub mod entity;
pub mod model;
pub mod pooling;
pub mod transformer;
pub mod vocab;

pub use augment::{cutoff_rows, token_cutoff, token_shuffle, AugmentMode};
pub use entity::{EntityEncoder, EntityEncoderVariant};
pub use model::{EncoderConfig, Model, Stack, EMBED_CHUNK};
pub use pooling::{
    combine_layers, extract_entity_tokens, pool_sentence, pool_stacked, EntityEmbedding, PoolingStrategy,
    SentenceEmbedding, TokenEmbeddings,
};
pub use transformer::{Dropout, EmbeddingNoise, StackedStates};
pub use vocab::{Vocab, CLS, PAD, UNK};
