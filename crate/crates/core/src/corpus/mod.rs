//! Sentences, the definition dictionary, mention annotation and the
//! entity / no-entity split.

pub mod annotate;
pub mod dictionary;
pub mod split;
pub mod stats;
pub mod synth;
pub mod text;

pub use annotate::{annotate_entities, DictionaryMatcher, EntityAnnotator, EntityMention, TokenSpan};
pub use dictionary::{surface_key, DefinitionDictionary, DictionaryEntry, DictionaryRecord};
pub use split::{mix_split, partition, partition_with, AnnotatedSentence, CorpusSplit, SentenceSet};
pub use stats::{entity_frequencies, entity_statistics, top_decile_share, EntityStats};
pub use synth::{generate_synthetic_corpus, split_pairs, SynthConfig, SyntheticCorpus};
pub use text::{segment, segment_and_filter, tokenize, Sentence};
