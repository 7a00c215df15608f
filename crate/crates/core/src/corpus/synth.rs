//! Deterministic synthetic clinical-style corpus with an entity dictionary
//! and a gold-scored similarity benchmark.
//!
//! Entities belong to organ-system clusters. Each cluster owns a pool of
//! content words; an entity's definition draws a subset of its cluster's pool,
//! and entity-bearing sentences may carry a content word from the same pool.
//! Entity surface forms are opaque single words (optionally with a modifier),
//! so relatedness between two entities is recoverable from their
//! definitions, not from their spelling.
//!
//! Pair kinds and gold scores:
//!
//! | kind | construction | gold |
//! |---|---|---|
//! | identical | same rendering twice | 5.0 |
//! | paraphrase | same template and entity, other slot fillers | 4.0 |
//! | entity swap | same rendering except the entity | `1 + 3·J(def₁, def₂)` |
//! | shared entity | different template, same entity | 2.5 |
//! | unrelated | different template, entities from different clusters | 0.5 |
//! | no entity | entity sentence vs entity-free sentence | 0.0 |
//!
//! `J` is the Jaccard overlap of the two definitions' content words.

use std::collections::{BTreeSet, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dictionary::{DefinitionDictionary, DictionaryRecord};
use crate::evaluation::sts::StsPair;
use crate::{Error, Result};

const CLUSTERS: &[(&str, &[&str])] = &[
    ("cardi", &["heart", "valve", "rhythm", "artery", "pulse", "chest", "murmur", "ventricle"]),
    ("pulmon", &["lung", "airway", "breath", "cough", "sputum", "oxygen", "pleura", "wheeze"]),
    ("nephr", &["kidney", "urine", "filtration", "creatinine", "bladder", "flank", "renal", "fluid"]),
    ("hepat", &["liver", "bile", "jaundice", "enzyme", "ascites", "portal", "abdomen", "clotting"]),
    ("neur", &["nerve", "brain", "seizure", "numbness", "reflex", "headache", "gait", "memory"]),
    ("gastr", &["stomach", "bowel", "nausea", "ulcer", "appetite", "digestion", "reflux", "stool"]),
    ("derm", &["skin", "rash", "lesion", "itching", "scalp", "blister", "scaling", "pigment"]),
    ("oste", &["bone", "joint", "fracture", "spine", "cartilage", "stiffness", "marrow", "posture"]),
    ("hemat", &["blood", "platelet", "anemia", "bleeding", "bruising", "spleen", "transfusion", "iron"]),
    ("endocrin", &["thyroid", "insulin", "glucose", "hormone", "adrenal", "pituitary", "weight", "thirst"]),
];

const SUFFIXES: &[&str] = &["itis", "osis", "algia", "opathy"];
const MODIFIERS: &[&str] = &["chronic", "acute", "recurrent", "diffuse", "focal", "primary"];
const GENUS: &[&str] = &["disorder", "condition", "disease", "syndrome"];
const DEF_GENERIC: &[&str] = &["damage", "swelling", "dysfunction", "pain", "weakness", "inflammation"];

const OPENINGS: &[&str] = &[
    "the patient was admitted with",
    "she has a long documented history of",
    "he was recently diagnosed with",
    "imaging obtained today was consistent with",
    "the family reports a prior history of",
    "on review there is clear evidence of",
    "she was referred to the clinic for",
    "he presented to the emergency department with",
    "the team remains concerned about worsening",
    "outpatient records repeatedly document",
    "the consultant strongly suspects underlying",
    "there is no previous record of",
    "the discharge summary lists",
    "the admitting physician noted",
];
const MIDDLES: &[&str] = &[
    "and complains of",
    "with associated",
    "complicated by new",
    "and now reports",
    "with intermittent",
    "together with persistent",
];
const NONE_OPENINGS: &[&str] = &[
    "the patient slept poorly and described",
    "vitals remained stable although she reported",
    "he denies any chest pain but notes",
    "the nursing staff observed mild",
    "she was seen by physiotherapy for",
    "the patient tolerated diet without",
];
const SYMPTOM_NOUNS: &[&str] = &["discomfort", "changes", "symptoms", "findings", "problems"];
const GENERIC_CONTEXT: &[&str] = &["general", "mild", "ongoing", "vague", "occasional", "new"];
const NONE_NOUNS: &[&str] = &["fatigue", "dizziness", "fever", "insomnia", "malaise", "anxiety"];
const CLOSINGS: &[&str] = &["noted", "first observed", "documented", "reported", "unchanged since"];
const FILLS: &[&str] = &[
    "yesterday",
    "overnight",
    "this morning",
    "last week",
    "on admission",
    "at discharge",
    "two days ago",
    "after surgery",
];
const SHORT: &[&str] = &["Stable overnight.", "Vitals reviewed.", "Plan unchanged.", "Seen and examined.", "Labs pending."];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub entity_count: usize,
    pub cluster_count: usize,
    pub zipf_exponent: f64,
    /// When set, the Zipf exponent is solved so that the expected share of
    /// the top 10% of entities equals this value.
    pub top_decile_share: Option<f64>,
    pub template_count: usize,
    pub none_template_count: usize,
    pub entity_sentence_count: usize,
    pub none_sentence_count: usize,
    pub short_sentence_count: usize,
    pub sentences_per_document: usize,
    pub sts_pair_count: usize,
    pub context_word_prob: f64,
    pub second_entity_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            entity_count: 200,
            cluster_count: 8,
            zipf_exponent: 1.1,
            top_decile_share: Some(0.75),
            template_count: 40,
            none_template_count: 12,
            entity_sentence_count: 6000,
            none_sentence_count: 1200,
            short_sentence_count: 300,
            sentences_per_document: 8,
            sts_pair_count: 600,
            context_word_prob: 0.5,
            second_entity_prob: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub documents: Vec<String>,
    pub dictionary: DefinitionDictionary,
    pub sts: Vec<StsPair>,
}

#[derive(Clone, Debug)]
struct Entity {
    id: String,
    name: String,
    cluster: usize,
    content: BTreeSet<&'static str>,
}

#[derive(Clone, Debug)]
enum Slot {
    Words(&'static str),
    Entity,
    Context,
    Fill,
    NoneNoun,
}

type Template = Vec<Slot>;

/// Slot fillers for one rendering of a template.
#[derive(Clone, Debug)]
struct Filling {
    entities: Vec<usize>,
    contexts: Vec<String>,
    fills: Vec<&'static str>,
    none_nouns: Vec<&'static str>,
}

/// Expected top-decile share of a Zipf law with exponent `s` over `k` ranks.
pub fn zipf_top_decile_share(s: f64, k: usize) -> f64 {
    let top = (k as f64 * 0.1).ceil() as usize;
    let w: Vec<f64> = (1..=k).map(|r| (r as f64).powf(-s)).collect();
    w[..top].iter().sum::<f64>() / w.iter().sum::<f64>()
}

/// Bisection for the exponent reaching `target` top-decile share.
pub fn solve_zipf_exponent(target: f64, k: usize) -> Result<f64> {
    let uniform = zipf_top_decile_share(0.0, k);
    if !(uniform..1.0).contains(&target) {
        return Err(Error::config(
            "top_decile_share",
            format!("{target} not reachable with {k} entities (must lie in [{uniform:.3}, 1))"),
        ));
    }
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if zipf_top_decile_share(mid, k) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

struct Generator {
    cfg: SynthConfig,
    rng: ChaCha8Rng,
    entities: Vec<Entity>,
    templates: Vec<Template>,
    none_templates: Vec<Template>,
    sampler: WeightedIndex<f64>,
    rank_to_entity: Vec<usize>,
}

impl Generator {
    fn new(cfg: SynthConfig, seed: u64) -> Result<Self> {
        if cfg.template_count > 0 && cfg.entity_count == 0 {
            return Err(Error::config("entity_count", "entity templates requested with zero entities"));
        }
        if cfg.cluster_count == 0 || cfg.cluster_count > CLUSTERS.len() {
            return Err(Error::config(
                "cluster_count",
                format!("must be in 1..={}", CLUSTERS.len()),
            ));
        }
        let capacity = cfg.cluster_count * SUFFIXES.len() * (MODIFIERS.len() + 1);
        if cfg.entity_count > capacity {
            return Err(Error::config("entity_count", format!("at most {capacity} entities for this cluster count")));
        }
        if cfg.template_count == 0 && cfg.entity_sentence_count > 0 {
            return Err(Error::config("template_count", "entity sentences requested with zero templates"));
        }
        if cfg.none_template_count == 0 && cfg.none_sentence_count > 0 {
            return Err(Error::config("none_template_count", "entity-free sentences requested with zero templates"));
        }
        if cfg.sentences_per_document == 0 {
            return Err(Error::config("sentences_per_document", "must be positive"));
        }
        for (key, p) in [("context_word_prob", cfg.context_word_prob), ("second_entity_prob", cfg.second_entity_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(key, "must be a probability"));
            }
        }
        let exponent = match cfg.top_decile_share {
            Some(t) if cfg.entity_count > 0 => solve_zipf_exponent(t, cfg.entity_count)?,
            _ => cfg.zipf_exponent,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entities = Self::make_entities(&cfg, &mut rng);
        let templates = (0..cfg.template_count).map(|_| Self::entity_template(&cfg, &mut rng)).collect();
        let none_templates = (0..cfg.none_template_count).map(|_| Self::none_template(&mut rng)).collect();
        let mut rank_to_entity: Vec<usize> = (0..cfg.entity_count).collect();
        rank_to_entity.shuffle(&mut rng);
        let weights: Vec<f64> = (1..=cfg.entity_count.max(1)).map(|r| (r as f64).powf(-exponent)).collect();
        let sampler = WeightedIndex::new(weights).map_err(|e| Error::config("zipf_exponent", e.to_string()))?;
        Ok(Self {
            cfg,
            rng,
            entities,
            templates,
            none_templates,
            sampler,
            rank_to_entity,
        })
    }

    fn make_entities(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Entity> {
        (0..cfg.entity_count)
            .map(|i| {
                let cluster = i % cfg.cluster_count;
                let k = i / cfg.cluster_count;
                let (root, pool) = CLUSTERS[cluster];
                let base = format!("{root}{}", SUFFIXES[k % SUFFIXES.len()]);
                let tier = k / SUFFIXES.len();
                let name = if tier == 0 {
                    base
                } else {
                    format!("{} {base}", MODIFIERS[tier - 1])
                };
                let content: BTreeSet<&'static str> = pool.choose_multiple(rng, 4).copied().collect();
                Entity {
                    id: format!("E{i:04}"),
                    name,
                    cluster,
                    content,
                }
            })
            .collect()
    }

    fn definition(entity: &Entity, rng: &mut ChaCha8Rng) -> String {
        let c: Vec<&str> = entity.content.iter().copied().collect();
        let genus = GENUS.choose(rng).unwrap();
        let g: Vec<&&str> = DEF_GENERIC.choose_multiple(rng, 2).collect();
        format!(
            "A {genus} of the {} and {} marked by {} {} and {} {}.",
            c[0], c[1], c[2], g[0], c[3], g[1]
        )
    }

    fn entity_template(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Template {
        let mut t = vec![Slot::Words(OPENINGS.choose(rng).unwrap()), Slot::Entity];
        if rng.random_bool(cfg.second_entity_prob) {
            t.push(Slot::Words("and"));
            t.push(Slot::Entity);
        }
        t.push(Slot::Words(MIDDLES.choose(rng).unwrap()));
        t.push(Slot::Context);
        t.push(Slot::Words(CLOSINGS.choose(rng).unwrap()));
        t.push(Slot::Fill);
        t
    }

    fn none_template(rng: &mut ChaCha8Rng) -> Template {
        vec![
            Slot::Words(NONE_OPENINGS.choose(rng).unwrap()),
            Slot::NoneNoun,
            Slot::Words(MIDDLES.choose(rng).unwrap()),
            Slot::Context,
            Slot::Words(CLOSINGS.choose(rng).unwrap()),
            Slot::Fill,
        ]
    }

    fn zipf_entity(&mut self) -> usize {
        self.rank_to_entity[self.sampler.sample(&mut self.rng)]
    }

    fn slot_counts(t: &Template) -> (usize, usize, usize, usize) {
        let mut c = (0, 0, 0, 0);
        for s in t {
            match s {
                Slot::Entity => c.0 += 1,
                Slot::Context => c.1 += 1,
                Slot::Fill => c.2 += 1,
                Slot::NoneNoun => c.3 += 1,
                Slot::Words(_) => {}
            }
        }
        c
    }

    fn context_word(&mut self, cluster: Option<usize>) -> String {
        let noun = SYMPTOM_NOUNS.choose(&mut self.rng).unwrap();
        let word = match cluster {
            Some(c) if self.rng.random_bool(self.cfg.context_word_prob) => CLUSTERS[c].1.choose(&mut self.rng).unwrap(),
            _ => GENERIC_CONTEXT.choose(&mut self.rng).unwrap(),
        };
        format!("{word} {noun}")
    }

    /// Fresh fillers for template `t`. `entities` supplies the entity slots
    /// (sampled Zipfian when `None`).
    fn filling(&mut self, t: &Template, entities: Option<Vec<usize>>) -> Filling {
        let (n_ent, n_ctx, n_fill, n_none) = Self::slot_counts(t);
        let entities = entities.unwrap_or_else(|| {
            let mut chosen: Vec<usize> = Vec::with_capacity(n_ent);
            while chosen.len() < n_ent {
                let e = self.zipf_entity();
                if !chosen.contains(&e) || self.entities.len() < n_ent {
                    chosen.push(e);
                }
            }
            chosen
        });
        let cluster = entities.first().map(|&e| self.entities[e].cluster);
        let contexts = (0..n_ctx).map(|_| self.context_word(cluster)).collect();
        let fills = (0..n_fill).map(|_| *FILLS.choose(&mut self.rng).unwrap()).collect();
        let none_nouns = (0..n_none).map(|_| *NONE_NOUNS.choose(&mut self.rng).unwrap()).collect();
        Filling {
            entities,
            contexts,
            fills,
            none_nouns,
        }
    }

    fn render(&self, t: &Template, f: &Filling) -> String {
        let (mut e, mut c, mut fi, mut n) = (0, 0, 0, 0);
        let mut words: Vec<String> = Vec::new();
        for slot in t {
            match slot {
                Slot::Words(w) => words.push(w.to_string()),
                Slot::Entity => {
                    words.push(self.entities[f.entities[e]].name.clone());
                    e += 1;
                }
                Slot::Context => {
                    words.push(f.contexts[c].clone());
                    c += 1;
                }
                Slot::Fill => {
                    words.push(f.fills[fi].to_string());
                    fi += 1;
                }
                Slot::NoneNoun => {
                    words.push(f.none_nouns[n].to_string());
                    n += 1;
                }
            }
        }
        capitalize(&words.join(" ")) + "."
    }

    fn documents(&mut self) -> Vec<String> {
        let mut sentences = Vec::new();
        for _ in 0..self.cfg.entity_sentence_count {
            let t = self.templates.choose(&mut self.rng).unwrap().clone();
            let f = self.filling(&t, None);
            sentences.push(self.render(&t, &f));
        }
        for _ in 0..self.cfg.none_sentence_count {
            let t = self.none_templates.choose(&mut self.rng).unwrap().clone();
            let f = self.filling(&t, Some(vec![]));
            sentences.push(self.render(&t, &f));
        }
        for _ in 0..self.cfg.short_sentence_count {
            sentences.push(SHORT.choose(&mut self.rng).unwrap().to_string());
        }
        sentences.shuffle(&mut self.rng);
        sentences
            .chunks(self.cfg.sentences_per_document)
            .map(|c| c.join(" "))
            .collect()
    }

    fn dictionary(&mut self) -> Result<DefinitionDictionary> {
        let mut records = Vec::with_capacity(self.entities.len());
        for e in &self.entities {
            records.push(DictionaryRecord {
                id: e.id.clone(),
                name: e.name.clone(),
                surfaces: vec![e.name.clone()],
                definition: Self::definition(e, &mut self.rng),
            });
        }
        DefinitionDictionary::from_records(records)
    }

    fn random_entity_in(&mut self, same_cluster_as: usize, same: bool) -> Option<usize> {
        let target = self.entities[same_cluster_as].cluster;
        let candidates: Vec<usize> = (0..self.entities.len())
            .filter(|&i| i != same_cluster_as && (self.entities[i].cluster == target) == same)
            .collect();
        candidates.choose(&mut self.rng).copied()
    }

    fn sts_pairs(&mut self) -> Result<Vec<StsPair>> {
        let mut out = Vec::with_capacity(self.cfg.sts_pair_count);
        if self.templates.is_empty() || self.entities.is_empty() {
            return Ok(out);
        }
        let mut seen = HashSet::new();
        let mut attempts = 0;
        while out.len() < self.cfg.sts_pair_count && attempts < self.cfg.sts_pair_count * 50 {
            attempts += 1;
            let ti = self.rng.random_range(0..self.templates.len());
            let t = self.templates[ti].clone();
            let n_ent = Self::slot_counts(&t).0;
            let e1: Vec<usize> = (0..n_ent).map(|_| self.rng.random_range(0..self.entities.len())).collect();
            let f1 = self.filling(&t, Some(e1.clone()));
            let s1 = self.render(&t, &f1);
            let roll: f64 = self.rng.random();
            let (s2, gold) = if roll < 0.05 {
                (s1.clone(), 5.0)
            } else if roll < 0.20 {
                let f2 = self.filling(&t, Some(e1.clone()));
                (self.render(&t, &f2), 4.0)
            } else if roll < 0.65 {
                let same = self.rng.random_bool(0.5);
                let Some(other) = self.random_entity_in(e1[0], same) else { continue };
                let mut f2 = f1.clone();
                f2.entities[0] = other;
                let j = jaccard(&self.entities[e1[0]].content, &self.entities[other].content);
                (self.render(&t, &f2), ((1.0 + 3.0 * j) * 100.0).round() / 100.0)
            } else if roll < 0.80 {
                let tj = self.rng.random_range(0..self.templates.len());
                if tj == ti {
                    continue;
                }
                let t2 = self.templates[tj].clone();
                let mut ents = vec![e1[0]];
                for _ in 1..Self::slot_counts(&t2).0 {
                    ents.push(self.rng.random_range(0..self.entities.len()));
                }
                let f2 = self.filling(&t2, Some(ents));
                (self.render(&t2, &f2), 2.5)
            } else if roll < 0.95 {
                let tj = self.rng.random_range(0..self.templates.len());
                if tj == ti {
                    continue;
                }
                let t2 = self.templates[tj].clone();
                let mut ents = Vec::new();
                for _ in 0..Self::slot_counts(&t2).0 {
                    let Some(e) = self.random_entity_in(e1[0], false) else { break };
                    ents.push(e);
                }
                if ents.len() != Self::slot_counts(&t2).0 {
                    continue;
                }
                let f2 = self.filling(&t2, Some(ents));
                (self.render(&t2, &f2), 0.5)
            } else {
                if self.none_templates.is_empty() {
                    continue;
                }
                let t2 = self.none_templates.choose(&mut self.rng).unwrap().clone();
                let f2 = self.filling(&t2, Some(vec![]));
                (self.render(&t2, &f2), 0.0)
            };
            if !seen.insert((s1.clone(), s2.clone())) {
                continue;
            }
            let (a, b) = if self.rng.random_bool(0.5) { (s1, s2) } else { (s2, s1) };
            out.push(StsPair::new(a, b, gold)?);
        }
        Ok(out)
    }
}

/// Generates documents, dictionary and similarity pairs from `config`,
/// deterministically in `rng_seed`.
pub fn generate_synthetic_corpus(config: &SynthConfig, rng_seed: u64) -> Result<SyntheticCorpus> {
    let mut g = Generator::new(config.clone(), rng_seed)?;
    let dictionary = g.dictionary()?;
    let documents = g.documents();
    let sts = g.sts_pairs()?;
    Ok(SyntheticCorpus {
        documents,
        dictionary,
        sts,
    })
}

/// First `⌈fraction · n⌉` pairs for development, the rest held out.
pub fn split_pairs(pairs: &[StsPair], train_fraction: f64) -> (Vec<StsPair>, Vec<StsPair>) {
    let n = ((pairs.len() as f64) * train_fraction).ceil() as usize;
    let n = n.min(pairs.len());
    (pairs[..n].to_vec(), pairs[n..].to_vec())
}
