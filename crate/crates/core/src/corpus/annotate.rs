//! Entity annotation against token spans.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dictionary::{surface_key, DefinitionDictionary};
use super::text::Sentence;

/// Half-open token range `[start, end)` into `Sentence::tokens`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Self {
        assert!(start < end, "empty span {start}..{end}");
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &TokenSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub entity_id: String,
    pub surface: String,
    pub span: TokenSpan,
}

/// Anything that finds entity mentions in a tokenized sentence. Mentions may
/// name entities that are absent from the definition dictionary.
pub trait EntityAnnotator {
    fn annotate(&self, sentence: &Sentence) -> Vec<EntityMention>;
}

/// Case-insensitive, left-to-right, longest-match lexicon matcher.
#[derive(Clone, Debug, Default)]
pub struct DictionaryMatcher {
    surfaces: BTreeMap<String, String>,
    max_tokens: usize,
}

impl DictionaryMatcher {
    pub fn from_dictionary(dict: &DefinitionDictionary) -> Self {
        let mut m = Self::default();
        for (surface, id) in dict.surface_forms() {
            m.add(surface, id);
        }
        m
    }

    /// Adds a surface form; later additions of the same key win.
    pub fn add(&mut self, surface: &str, entity_id: &str) {
        let key = surface_key(surface);
        if key.is_empty() {
            return;
        }
        self.max_tokens = self.max_tokens.max(key.split(' ').count());
        self.surfaces.insert(key, entity_id.to_string());
    }
}

impl EntityAnnotator for DictionaryMatcher {
    fn annotate(&self, sentence: &Sentence) -> Vec<EntityMention> {
        let lower: Vec<String> = sentence.tokens.iter().map(|t| t.to_lowercase()).collect();
        let n = lower.len();
        let mut out = Vec::new();
        let mut i = 0;
        'scan: while i < n {
            let longest = self.max_tokens.min(n - i);
            for len in (1..=longest).rev() {
                let key = lower[i..i + len].join(" ");
                if let Some(id) = self.surfaces.get(&key) {
                    out.push(EntityMention {
                        entity_id: id.clone(),
                        surface: sentence.tokens[i..i + len].join(" "),
                        span: TokenSpan::new(i, i + len),
                    });
                    i += len;
                    continue 'scan;
                }
            }
            i += 1;
        }
        out
    }
}

/// Annotates with the dictionary's own surface forms.
pub fn annotate_entities(sentence: &Sentence, dict: &DefinitionDictionary) -> Vec<EntityMention> {
    DictionaryMatcher::from_dictionary(dict).annotate(sentence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dictionary::DictionaryRecord;

    fn dict(entries: &[(&str, &str)]) -> DefinitionDictionary {
        DefinitionDictionary::from_records(entries.iter().map(|(id, s)| DictionaryRecord {
            id: id.to_string(),
            name: s.to_string(),
            surfaces: vec![s.to_string()],
            definition: format!("about {s}"),
        }))
        .unwrap()
    }

    #[test]
    fn longest_match_wins() {
        let d = dict(&[("HF", "heart failure"), ("H", "heart")]);
        let s = Sentence::new("s", "chronic heart failure noted");
        let m = annotate_entities(&s, &d);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].entity_id, "HF");
        assert_eq!(m[0].span, TokenSpan::new(1, 3));
        assert_eq!(m[0].surface, "heart failure");
    }

    #[test]
    fn no_match_is_empty() {
        let d = dict(&[("HF", "heart failure")]);
        assert!(annotate_entities(&Sentence::new("s", "all quiet overnight"), &d).is_empty());
    }

    #[test]
    fn case_insensitive() {
        let d = dict(&[("HF", "heart failure")]);
        let m = annotate_entities(&Sentence::new("s", "Heart Failure, stable."), &d);
        assert_eq!(m[0].surface, "Heart Failure");
        assert_eq!(m[0].span, TokenSpan::new(0, 2));
    }

    /// Brute force: every (start, len) window whose lowercase form is a
    /// dictionary surface, then greedy left-to-right longest selection.
    fn brute_force(sentence: &Sentence, d: &DefinitionDictionary) -> Vec<(usize, usize, String)> {
        let lower: Vec<String> = sentence.tokens.iter().map(|t| t.to_lowercase()).collect();
        let mut candidates = Vec::new();
        for (surface, id) in d.surface_forms() {
            let parts: Vec<&str> = surface.split(' ').collect();
            for start in 0..lower.len() {
                if start + parts.len() <= lower.len()
                    && lower[start..start + parts.len()].iter().zip(&parts).all(|(a, b)| a == b)
                {
                    candidates.push((start, start + parts.len(), id.to_string()));
                }
            }
        }
        candidates.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        let mut chosen: Vec<(usize, usize, String)> = Vec::new();
        for c in candidates {
            if chosen.last().is_none_or(|last| c.0 >= last.1) {
                chosen.push(c);
            }
        }
        chosen
    }

    #[test]
    fn fixture_matches_brute_force() {
        let d = dict(&[
            ("HF", "heart failure"),
            ("H", "heart"),
            ("CKD", "chronic kidney disease"),
            ("K", "kidney"),
            ("G", "gout"),
        ]);
        let s = Sentence::new(
            "s",
            "History of chronic kidney disease and congestive heart failure, no gout flare; kidney fine.",
        );
        let got: Vec<_> = annotate_entities(&s, &d)
            .into_iter()
            .map(|m| (m.span.start, m.span.end, m.entity_id))
            .collect();
        assert_eq!(got, brute_force(&s, &d));
        assert_eq!(got.len(), 4);
        for (i, a) in got.iter().enumerate() {
            for b in &got[i + 1..] {
                assert!(a.1 <= b.0);
            }
        }
    }
}
