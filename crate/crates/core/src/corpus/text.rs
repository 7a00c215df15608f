//! Sentence segmentation, tokenization and the length filter.

use serde::{Deserialize, Serialize};

/// A segmented, tokenized sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub word_count: usize,
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        let word_count = text.split_whitespace().count();
        Self {
            id: id.into(),
            text,
            tokens,
            word_count,
        }
    }
}

/// Splits on whitespace, then separates every punctuation character into
/// its own token. Case is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut current = String::new();
        for ch in chunk.chars() {
            if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(ch.to_string());
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

fn is_terminal(ch: char) -> bool {
    matches!(ch, '.' | '!' | '?')
}

/// Splits one document into sentence strings at terminal punctuation that
/// is followed by whitespace (or ends the document).
pub fn segment(document: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = document.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        if !is_terminal(ch) {
            continue;
        }
        match chars.peek() {
            Some((_, next)) if next.is_whitespace() => {}
            Some(_) => continue,
            None => {}
        }
        let end = i + ch.len_utf8();
        let piece = document[start..end].trim();
        if !piece.is_empty() {
            out.push(piece);
        }
        start = end;
    }
    let rest = document[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// Segments every document and keeps sentences with at least `min_words`
/// whitespace-delimited words, in document order. Ids are `d{doc}-s{sent}`
/// with the sentence index counted before filtering.
pub fn segment_and_filter<S: AsRef<str>>(documents: &[S], min_words: usize) -> Vec<Sentence> {
    let min_words = min_words.max(1);
    let mut out = Vec::new();
    for (d, doc) in documents.iter().enumerate() {
        for (s, text) in segment(doc.as_ref()).into_iter().enumerate() {
            if text.split_whitespace().count() >= min_words {
                out.push(Sentence::new(format!("d{d}-s{s}"), text));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_boundary() {
        let docs = ["A b. One two three four five six seven eight nine ten."];
        let out = segment_and_filter(&docs, 10);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].word_count, 10);
        assert_eq!(out[0].text, "One two three four five six seven eight nine ten.");
        assert_eq!(out[0].id, "d0-s1");
    }

    #[test]
    fn empty_inputs() {
        assert!(segment_and_filter(&[""], 10).is_empty());
        assert!(segment_and_filter::<&str>(&[], 10).is_empty());
    }

    #[test]
    fn tokenization_splits_punctuation() {
        assert_eq!(
            tokenize("Heart-failure, noted."),
            vec!["Heart", "-", "failure", ",", "noted", "."]
        );
        let s = Sentence::new("x", "BP 120/80 today.");
        assert_eq!(s.word_count, 3);
        assert_eq!(s.tokens, vec!["BP", "120", "/", "80", "today", "."]);
    }

    #[test]
    fn decimal_points_do_not_split() {
        assert_eq!(segment("Dose 2.5 mg daily. Next one"), vec!["Dose 2.5 mg daily.", "Next one"]);
    }

    /// Hand-counted fixture: three documents, twenty sentences, of which
    /// exactly eight have ten or more words.
    #[test]
    fn fixture_matches_hand_count() {
        let docs = [
            "Patient seen. The patient was admitted overnight with worsening shortness of breath and fever. \
             Stable. Vitals were reviewed with the nursing team and found to be within normal limits today. \
             No acute distress. Plan discussed. The family was updated at the bedside about the current plan of care. \
             Labs pending.",
            "Afebrile. Chest film shows no new consolidation compared with the prior study from last week. \
             Continue current antibiotics! Will follow up renal function and electrolytes again in the morning tomorrow. \
             Pain controlled? Mobilising with physiotherapy. The wound is clean and dry with no signs of infection at all.",
            "Discharged home. Follow up in the outpatient clinic in two weeks with repeat blood work ordered. \
             Medications reconciled. Short note. Return precautions were explained and the patient verbalised good understanding.",
        ];
        let hand_counts = [2, 12, 1, 15, 3, 2, 13, 2, 1, 14, 3, 12, 2, 3, 13, 2, 14, 2, 2, 10];
        let segmented: Vec<usize> = docs
            .iter()
            .flat_map(|d| segment(d))
            .map(|s| s.split_whitespace().count())
            .collect();
        assert_eq!(segmented, hand_counts);
        let kept = segment_and_filter(&docs, 10);
        assert_eq!(kept.len(), 8);
        assert!(kept.iter().all(|s| s.word_count >= 10));
        let ids: Vec<_> = kept.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["d0-s1", "d0-s3", "d0-s6", "d1-s1", "d1-s3", "d1-s6", "d2-s1", "d2-s4"]);
    }
}
