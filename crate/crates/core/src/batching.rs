//! Batch construction, per-sentence entity assignment and in-batch
//! duplicate-entity handling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedSentence, EntityMention};
use crate::{Error, Result};

/// How repeated entities inside one batch are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupStrategy {
    /// Keep the batch as drawn.
    Naive,
    /// Drop later sentences whose entity already appeared. No backfill.
    Remove,
    /// Resample offending sentences from the entity pool.
    #[default]
    Replace,
}

impl DedupStrategy {
    pub const ALL: [DedupStrategy; 3] = [DedupStrategy::Naive, DedupStrategy::Remove, DedupStrategy::Replace];

    pub fn as_str(self) -> &'static str {
        match self {
            DedupStrategy::Naive => "naive",
            DedupStrategy::Remove => "remove",
            DedupStrategy::Replace => "replace",
        }
    }
}

impl fmt::Display for DedupStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DedupStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("strategy", format!("unknown dedup strategy {s:?} (naive, remove, replace)")))
    }
}

/// One training batch. `assignments[i]` is the entity chosen for
/// `sentences[i]`, and `entity_subset_indices` lists the positions that have one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub sentences: Vec<AnnotatedSentence>,
    pub assignments: Vec<Option<EntityMention>>,
    pub entity_subset_indices: Vec<usize>,
}

impl Batch {
    fn push(&mut self, sentence: AnnotatedSentence, assignment: Option<EntityMention>) {
        if assignment.is_some() {
            self.entity_subset_indices.push(self.sentences.len());
        }
        self.sentences.push(sentence);
        self.assignments.push(assignment);
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Assigned entity ids in batch order.
    pub fn assigned_ids(&self) -> Vec<&str> {
        self.assignments.iter().flatten().map(|m| m.entity_id.as_str()).collect()
    }

    pub fn has_duplicate_entities(&self) -> bool {
        let ids = self.assigned_ids();
        ids.iter().collect::<HashSet<_>>().len() != ids.len()
    }
}

/// Picks one of the sentence's mentions uniformly at random.
pub fn assign_entity<R: Rng + ?Sized>(sentence: &AnnotatedSentence, rng: &mut R) -> Result<EntityMention> {
    sentence
        .mentions
        .choose(rng)
        .cloned()
        .ok_or_else(|| Error::NoMentions(sentence.sentence.id.clone()))
}

fn assign_optional<R: Rng + ?Sized>(sentence: &AnnotatedSentence, rng: &mut R) -> Option<EntityMention> {
    assign_entity(sentence, rng).ok()
}

/// Draws up to `size` sentences from `stream`, assigns entities and applies
/// `strategy`. Under [`DedupStrategy::Replace`], offending sentences are
/// resampled from `pool` with fresh assignments; a replacement must carry an
/// unseen entity and must not already be in the batch. The retry budget is
/// ten resamples per batch slot.
pub fn make_batch<I, R>(
    stream: &mut I,
    size: usize,
    strategy: DedupStrategy,
    pool: &[AnnotatedSentence],
    rng: &mut R,
) -> Result<Batch>
where
    I: Iterator<Item = AnnotatedSentence>,
    R: Rng + ?Sized,
{
    if size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    let drawn: Vec<(AnnotatedSentence, Option<EntityMention>)> = stream
        .take(size)
        .map(|s| {
            let a = assign_optional(&s, rng);
            (s, a)
        })
        .collect();

    let mut batch = Batch::default();
    match strategy {
        DedupStrategy::Naive => {
            for (s, a) in drawn {
                batch.push(s, a);
            }
        }
        DedupStrategy::Remove => {
            let mut seen = HashSet::new();
            for (s, a) in drawn {
                match &a {
                    Some(m) if !seen.insert(m.entity_id.clone()) => continue,
                    _ => batch.push(s, a),
                }
            }
        }
        DedupStrategy::Replace => {
            let needs_pool = drawn.iter().any(|(_, a)| a.is_some());
            if needs_pool && pool.is_empty() {
                return Err(Error::config("strategy", "replace requires a non-empty entity pool"));
            }
            let budget = 10 * size;
            let mut attempts = 0;
            let mut seen: HashSet<String> = HashSet::new();
            let mut in_batch: HashSet<String> = drawn.iter().map(|(s, _)| s.sentence.id.clone()).collect();
            for (s, a) in drawn {
                let Some(m) = a else {
                    batch.push(s, None);
                    continue;
                };
                if seen.insert(m.entity_id.clone()) {
                    batch.push(s, Some(m));
                    continue;
                }
                loop {
                    if attempts == budget {
                        return Err(Error::DedupShortfall {
                            needed: batch.entity_subset_indices.len() + 1,
                            distinct: seen.len(),
                            attempts,
                        });
                    }
                    attempts += 1;
                    let candidate = pool.choose(rng).expect("pool checked non-empty");
                    if in_batch.contains(&candidate.sentence.id) {
                        continue;
                    }
                    let Some(fresh) = assign_optional(candidate, rng) else { continue };
                    if seen.insert(fresh.entity_id.clone()) {
                        in_batch.insert(candidate.sentence.id.clone());
                        batch.push(candidate.clone(), Some(fresh));
                        break;
                    }
                }
            }
        }
    }
    Ok(batch)
}

/// Endless stream over a fixed corpus, reshuffled at the start of every pass.
#[derive(Clone, Debug)]
pub struct EpochStream<R> {
    items: Vec<AnnotatedSentence>,
    order: Vec<usize>,
    pos: usize,
    rng: R,
}

impl<R: Rng> EpochStream<R> {
    pub fn new(items: Vec<AnnotatedSentence>, rng: R) -> Self {
        let order = (0..items.len()).collect();
        Self {
            items,
            order,
            pos: usize::MAX,
            rng,
        }
    }
}

impl<R: Rng> Iterator for EpochStream<R> {
    type Item = AnnotatedSentence;

    fn next(&mut self) -> Option<AnnotatedSentence> {
        if self.items.is_empty() {
            return None;
        }
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let item = self.items[self.order[self.pos]].clone();
        self.pos += 1;
        Some(item)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEstimate {
    pub p_any_duplicate: f64,
    pub mean_unique_fraction: f64,
}

/// Monte-Carlo estimate of in-batch duplicate statistics when each of
/// `batch_size` assigned entities is drawn independently from `distribution`.
pub fn duplicate_collision_rate<R: Rng + ?Sized>(
    distribution: &BTreeMap<String, usize>,
    batch_size: usize,
    trials: usize,
    rng: &mut R,
) -> Result<CollisionEstimate> {
    if trials == 0 || batch_size == 0 {
        return Err(Error::InvalidInput("trials and batch size must be positive".into()));
    }
    let weights: Vec<usize> = distribution.values().copied().collect();
    let sampler = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidInput(format!("entity distribution: {e}")))?;
    // Generation-stamped marks avoid clearing a set per trial.
    let mut mark = vec![0usize; weights.len()];
    let mut any = 0usize;
    let mut unique_sum = 0.0;
    for trial in 1..=trials {
        let mut unique = 0;
        for _ in 0..batch_size {
            let e = sampler.sample(rng);
            if mark[e] != trial {
                mark[e] = trial;
                unique += 1;
            }
        }
        if unique < batch_size {
            any += 1;
        }
        unique_sum += unique as f64 / batch_size as f64;
    }
    Ok(CollisionEstimate {
        p_any_duplicate: any as f64 / trials as f64,
        mean_unique_fraction: unique_sum / trials as f64,
    })
}

/// Probability that `batch_size` uniform draws over `k` entities collide.
pub fn birthday_collision_probability(k: usize, batch_size: usize) -> f64 {
    1.0 - (0..batch_size).map(|i| 1.0 - i as f64 / k as f64).product::<f64>()
}

pub fn uniform_distribution(k: usize) -> BTreeMap<String, usize> {
    (0..k).map(|i| (format!("e{i}"), 1)).collect()
}

/// Reads `id<TAB>count` lines.
pub fn read_distribution(path: &Path) -> Result<BTreeMap<String, usize>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (id, count) = line.split_once('\t').ok_or_else(|| parse("expected id<TAB>count".into()))?;
        let count: usize = count.trim().parse().map_err(|e| parse(format!("count {count:?}: {e}")))?;
        *out.entry(id.to_string()).or_insert(0) += count;
    }
    Ok(out)
}

/// Writes the `id<TAB>count` format read by [`read_distribution`].
pub fn write_distribution(path: &Path, distribution: &BTreeMap<String, usize>) -> Result<()> {
    let text: String = distribution.iter().map(|(id, c)| format!("{id}\t{c}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, TokenSpan};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sent(id: &str, entities: &[&str]) -> AnnotatedSentence {
        let text = entities.join(" x ");
        let sentence = Sentence::new(id, if text.is_empty() { "nothing here".into() } else { text });
        let mentions = entities
            .iter()
            .enumerate()
            .map(|(k, e)| EntityMention {
                entity_id: e.to_string(),
                surface: e.to_string(),
                span: TokenSpan::new(2 * k, 2 * k + 1),
            })
            .collect();
        AnnotatedSentence { sentence, mentions }
    }

    fn four_with_duplicate() -> Vec<AnnotatedSentence> {
        vec![sent("a", &["E"]), sent("b", &["F"]), sent("c", &["E"]), sent("d", &["G"])]
    }

    fn pool() -> Vec<AnnotatedSentence> {
        (0..20).map(|i| sent(&format!("p{i}"), &[&format!("P{i}")])).collect()
    }

    #[test]
    fn single_mention_is_always_chosen() {
        let s = sent("a", &["E"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(assign_entity(&s, &mut rng).unwrap().entity_id, "E");
        }
        assert!(matches!(assign_entity(&sent("z", &[]), &mut rng), Err(Error::NoMentions(_))));
    }

    #[test]
    fn two_mentions_are_balanced() {
        // Binomial(10000, 0.5) has sd 50; 200 is a four-sigma band.
        let s = sent("a", &["E", "F"]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let e = (0..10_000).filter(|_| assign_entity(&s, &mut rng).unwrap().entity_id == "E").count();
        assert!((4800..=5200).contains(&e), "{e}");
    }

    #[test]
    fn assignment_is_deterministic() {
        let s = sent("a", &["E", "F", "G"]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| assign_entity(&s, &mut rng).unwrap().entity_id).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }

    #[test]
    fn strategies_on_a_duplicate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pool();
        let naive = make_batch(&mut four_with_duplicate().into_iter(), 4, DedupStrategy::Naive, &p, &mut rng).unwrap();
        assert_eq!(naive.sentences, four_with_duplicate());
        assert!(naive.has_duplicate_entities());

        let removed = make_batch(&mut four_with_duplicate().into_iter(), 4, DedupStrategy::Remove, &p, &mut rng).unwrap();
        let ids: Vec<_> = removed.sentences.iter().map(|s| s.sentence.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "d"]);

        let replaced = make_batch(&mut four_with_duplicate().into_iter(), 4, DedupStrategy::Replace, &p, &mut rng).unwrap();
        assert_eq!(replaced.len(), 4);
        assert_eq!(replaced.assigned_ids().iter().collect::<HashSet<_>>().len(), 4);
        assert_eq!(replaced.entity_subset_indices, [0, 1, 2, 3]);
    }

    #[test]
    fn entity_free_sentences_have_no_assignment() {
        let draw = vec![sent("a", &["E"]), sent("n", &[]), sent("b", &["F"])];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = make_batch(&mut draw.into_iter(), 3, DedupStrategy::Replace, &pool(), &mut rng).unwrap();
        assert_eq!(b.entity_subset_indices, [0, 2]);
        assert!(b.assignments[1].is_none());
    }

    #[test]
    fn replace_shortfall_is_reported() {
        let draw: Vec<_> = (0..4).map(|i| sent(&format!("s{i}"), &["E"])).collect();
        let tiny = vec![sent("q", &["E"])];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        match make_batch(&mut draw.into_iter(), 4, DedupStrategy::Replace, &tiny, &mut rng) {
            Err(Error::DedupShortfall { attempts, distinct, .. }) => {
                assert_eq!(attempts, 40);
                assert_eq!(distinct, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn epoch_stream_visits_everything_each_pass() {
        let items: Vec<_> = (0..7).map(|i| sent(&format!("s{i}"), &[])).collect();
        let mut s = EpochStream::new(items, ChaCha8Rng::seed_from_u64(0));
        for _ in 0..3 {
            let mut ids: Vec<_> = (0..7).map(|_| s.next().unwrap().sentence.id).collect();
            ids.sort();
            assert_eq!(ids, (0..7).map(|i| format!("s{i}")).collect::<Vec<_>>());
        }
    }

    #[test]
    fn single_entity_always_collides() {
        let dist: BTreeMap<String, usize> = [("E".to_string(), 5)].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = duplicate_collision_rate(&dist, 32, 100, &mut rng).unwrap();
        assert_eq!(est.p_any_duplicate, 1.0);
        assert_eq!(est.mean_unique_fraction, 1.0 / 32.0);
    }

    #[test]
    fn uniform_collision_matches_birthday_bound() {
        let analytic = birthday_collision_probability(1000, 32);
        // Exact product evaluated independently: 0.394252222...
        assert!((analytic - 0.394_252_222_311_103_8).abs() < 1e-12, "{analytic}");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let est = duplicate_collision_rate(&uniform_distribution(1000), 32, 20_000, &mut rng).unwrap();
        assert!((est.p_any_duplicate - analytic).abs() < 0.02, "{est:?}");
    }

    #[test]
    fn distribution_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        std::fs::write(&path, "a\t3\nb\t1\n\na\t2\n").unwrap();
        let d = read_distribution(&path).unwrap();
        assert_eq!(d["a"], 5);
        assert_eq!(d["b"], 1);
        std::fs::write(&path, "a 3\n").unwrap();
        assert!(matches!(read_distribution(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in DedupStrategy::ALL {
            assert_eq!(s.as_str().parse::<DedupStrategy>().unwrap(), s);
        }
        assert!("other".parse::<DedupStrategy>().is_err());
    }
}
