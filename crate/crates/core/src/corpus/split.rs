//! Partitioning into entity-bearing and entity-free sentence sets, ratio
//! mixing, and the split file format.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::annotate::{DictionaryMatcher, EntityAnnotator, EntityMention};
use super::dictionary::DefinitionDictionary;
use super::text::Sentence;
use crate::{Error, Result};

/// A sentence together with its dictionary-resolved mentions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    #[serde(flatten)]
    pub sentence: Sentence,
    pub mentions: Vec<EntityMention>,
}

impl AnnotatedSentence {
    pub fn has_entities(&self) -> bool {
        !self.mentions.is_empty()
    }
}

/// `s_all` keeps every input sentence. `s_ent` holds sentences with at least
/// one dictionary mention, `s_none` those with no mention at all. Sentences
/// whose mentions are all outside the dictionary appear only in `s_all`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusSplit {
    pub s_all: Vec<AnnotatedSentence>,
    pub s_ent: Vec<AnnotatedSentence>,
    pub s_none: Vec<AnnotatedSentence>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceSet {
    Ent,
    None,
    Gap,
}

#[derive(Serialize, Deserialize)]
struct SplitRecord {
    set: SentenceSet,
    #[serde(flatten)]
    sentence: AnnotatedSentence,
}

pub fn partition(sentences: &[Sentence], dict: &DefinitionDictionary) -> CorpusSplit {
    partition_with(sentences, &DictionaryMatcher::from_dictionary(dict), dict)
}

pub fn partition_with(
    sentences: &[Sentence],
    annotator: &dyn EntityAnnotator,
    dict: &DefinitionDictionary,
) -> CorpusSplit {
    let mut split = CorpusSplit::default();
    for s in sentences {
        let all = annotator.annotate(s);
        let found_any = !all.is_empty();
        let mentions: Vec<_> = all.into_iter().filter(|m| dict.contains(&m.entity_id)).collect();
        let annotated = AnnotatedSentence {
            sentence: s.clone(),
            mentions,
        };
        if annotated.has_entities() {
            split.s_ent.push(annotated.clone());
        } else if !found_any {
            split.s_none.push(annotated.clone());
        }
        split.s_all.push(annotated);
    }
    split
}

/// Samples `round(total · ent_fraction)` sentences from `s_ent` and the rest
/// from `s_none`, without replacement, then shuffles the union.
pub fn mix_split(
    split: &CorpusSplit,
    ent_fraction: f64,
    total: usize,
    rng_seed: u64,
) -> Result<Vec<AnnotatedSentence>> {
    if !(0.0..=1.0).contains(&ent_fraction) {
        return Err(Error::config("ent_fraction", format!("{ent_fraction} is outside [0, 1]")));
    }
    let n_ent = (total as f64 * ent_fraction).round() as usize;
    let n_none = total - n_ent;
    if n_ent > split.s_ent.len() {
        return Err(Error::InsufficientPool {
            set: "s_ent",
            available: split.s_ent.len(),
            requested: n_ent,
        });
    }
    if n_none > split.s_none.len() {
        return Err(Error::InsufficientPool {
            set: "s_none",
            available: split.s_none.len(),
            requested: n_none,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out: Vec<AnnotatedSentence> = index::sample(&mut rng, split.s_ent.len(), n_ent)
        .into_iter()
        .map(|i| split.s_ent[i].clone())
        .collect();
    out.extend(
        index::sample(&mut rng, split.s_none.len(), n_none)
            .into_iter()
            .map(|i| split.s_none[i].clone()),
    );
    out.shuffle(&mut rng);
    Ok(out)
}

impl CorpusSplit {
    pub fn write(&self, path: &Path) -> Result<()> {
        let ent: std::collections::HashSet<&str> = self.s_ent.iter().map(|s| s.sentence.id.as_str()).collect();
        let none: std::collections::HashSet<&str> = self.s_none.iter().map(|s| s.sentence.id.as_str()).collect();
        let mut out = Vec::new();
        for s in &self.s_all {
            let set = if ent.contains(s.sentence.id.as_str()) {
                SentenceSet::Ent
            } else if none.contains(s.sentence.id.as_str()) {
                SentenceSet::None
            } else {
                SentenceSet::Gap
            };
            serde_json::to_writer(
                &mut out,
                &SplitRecord {
                    set,
                    sentence: s.clone(),
                },
            )
            .expect("record serialises");
            out.push(b'\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut split = CorpusSplit::default();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SplitRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            match rec.set {
                SentenceSet::Ent => split.s_ent.push(rec.sentence.clone()),
                SentenceSet::None => split.s_none.push(rec.sentence.clone()),
                SentenceSet::Gap => {}
            }
            split.s_all.push(rec.sentence);
        }
        Ok(split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dictionary::DictionaryRecord;
    use std::collections::HashSet;

    fn dict() -> DefinitionDictionary {
        DefinitionDictionary::from_records([DictionaryRecord {
            id: "HF".into(),
            name: "heart failure".into(),
            surfaces: vec![],
            definition: "the heart cannot pump enough blood".into(),
        }])
        .unwrap()
    }

    fn sentences() -> Vec<Sentence> {
        vec![
            Sentence::new("a", "admitted with heart failure exacerbation"),
            Sentence::new("b", "no complaints overnight"),
            Sentence::new("c", "known gout of the left toe"),
        ]
    }

    #[test]
    fn set_definitions_with_gap() {
        let d = dict();
        let mut annotator = DictionaryMatcher::from_dictionary(&d);
        annotator.add("gout", "NOT_IN_DICT");
        let split = partition_with(&sentences(), &annotator, &d);
        assert_eq!(split.s_all.len(), 3);
        assert_eq!(split.s_ent.len(), 1);
        assert_eq!(split.s_none.len(), 1);
        assert_eq!(split.s_ent[0].sentence.id, "a");
        assert_eq!(split.s_none[0].sentence.id, "b");
    }

    #[test]
    fn all_entity_corpus_has_empty_none() {
        let s = vec![
            Sentence::new("a", "heart failure again"),
            Sentence::new("b", "worsening heart failure"),
        ];
        let split = partition(&s, &dict());
        assert!(split.s_none.is_empty());
        assert_eq!(split.s_ent.len(), 2);
    }

    #[test]
    fn partition_is_idempotent() {
        let d = dict();
        let split = partition(&sentences(), &d);
        let again: Vec<Sentence> = split.s_all.iter().map(|s| s.sentence.clone()).collect();
        assert_eq!(partition(&again, &d), split);
    }

    fn pools(n_ent: usize, n_none: usize) -> CorpusSplit {
        let d = dict();
        let mut s = Vec::new();
        for i in 0..n_ent {
            s.push(Sentence::new(format!("e{i}"), format!("case {i} with heart failure")));
        }
        for i in 0..n_none {
            s.push(Sentence::new(format!("n{i}"), format!("case {i} without issues")));
        }
        partition(&s, &d)
    }

    #[test]
    fn mix_counts() {
        let split = pools(1000, 200);
        let out = mix_split(&split, 0.9, 1000, 3).unwrap();
        assert_eq!(out.len(), 1000);
        assert_eq!(out.iter().filter(|s| s.has_entities()).count(), 900);
        let ids: HashSet<_> = out.iter().map(|s| &s.sentence.id).collect();
        assert_eq!(ids.len(), 1000, "sampled without replacement");

        let all_ent = mix_split(&split, 1.0, 500, 3).unwrap();
        assert!(all_ent.iter().all(AnnotatedSentence::has_entities));
    }

    #[test]
    fn mix_is_deterministic() {
        let split = pools(300, 300);
        assert_eq!(mix_split(&split, 0.25, 200, 11).unwrap(), mix_split(&split, 0.25, 200, 11).unwrap());
        assert_ne!(mix_split(&split, 0.25, 200, 11).unwrap(), mix_split(&split, 0.25, 200, 12).unwrap());
    }

    #[test]
    fn mix_reports_deficient_set() {
        let split = pools(10, 100);
        match mix_split(&split, 0.5, 100, 0) {
            Err(Error::InsufficientPool { set, .. }) => assert_eq!(set, "s_ent"),
            other => panic!("unexpected {other:?}"),
        }
        match mix_split(&split, 0.0, 101, 0) {
            Err(Error::InsufficientPool { set, .. }) => assert_eq!(set, "s_none"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn split_file_round_trip() {
        let d = dict();
        let mut annotator = DictionaryMatcher::from_dictionary(&d);
        annotator.add("gout", "NOT_IN_DICT");
        let split = partition_with(&sentences(), &annotator, &d);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.jsonl");
        split.write(&path).unwrap();
        assert_eq!(CorpusSplit::read(&path).unwrap(), split);
    }
}
