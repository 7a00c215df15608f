//! A prepared corpus plus evaluation pairs, ready for training runs.

use serde::{Deserialize, Serialize};

use crate::corpus::{
    generate_synthetic_corpus, partition, segment_and_filter, split_pairs, CorpusSplit, DefinitionDictionary, SynthConfig,
    SyntheticCorpus,
};
use crate::evaluation::StsPair;
use crate::training::TrainData;
use crate::Result;

/// Sentences shorter than this many words are discarded.
pub const MIN_WORDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub synth: SynthConfig,
    pub min_words: usize,
    /// Share of the similarity pairs used for best-step selection.
    pub train_pair_fraction: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            min_words: MIN_WORDS,
            train_pair_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub split: CorpusSplit,
    pub dictionary: DefinitionDictionary,
    pub train_pairs: Vec<StsPair>,
    pub test_pairs: Vec<StsPair>,
}

impl Benchmark {
    pub fn from_corpus(corpus: &SyntheticCorpus, min_words: usize, train_pair_fraction: f64) -> Self {
        let sentences = segment_and_filter(&corpus.documents, min_words);
        let split = partition(&sentences, &corpus.dictionary);
        let (train_pairs, test_pairs) = split_pairs(&corpus.sts, train_pair_fraction);
        Self {
            split,
            dictionary: corpus.dictionary.clone(),
            train_pairs,
            test_pairs,
        }
    }

    pub fn synthetic(config: &BenchmarkConfig, seed: u64) -> Result<Self> {
        let corpus = generate_synthetic_corpus(&config.synth, seed)?;
        Ok(Self::from_corpus(&corpus, config.min_words, config.train_pair_fraction))
    }

    pub fn data(&self) -> TrainData<'_> {
        TrainData {
            split: &self.split,
            dictionary: &self.dictionary,
            train_pairs: &self.train_pairs,
            test_pairs: &self.test_pairs,
        }
    }
}
