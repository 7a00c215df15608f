use std::collections::HashSet;

use entcl::autodiff::{Mat, Tape};
use entcl::batching::{make_batch, DedupStrategy};
use entcl::corpus::{
    annotate_entities, entity_statistics, mix_split, partition, AnnotatedSentence, DefinitionDictionary,
    DictionaryRecord, EntityMention, Sentence, TokenSpan,
};
use entcl::encoder::{
    cutoff_rows, extract_entity_tokens, pool_sentence, token_shuffle, EncoderConfig, EntityEncoderVariant, Model,
    PoolingStrategy, Vocab, CLS, PAD,
};
use entcl::evaluation::{alignment, srocc, uniformity};
use entcl::losses::{cosine_similarity, entity_cl_loss, info_nce_on_tape, sentence_cl_loss, LossConfig, Reduction};
use entcl::training::TrainConfig;
use ndarray::{Array1, Axis};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_filter("rows need a norm", move |v| v.chunks(cols).all(|r| r.iter().any(|x| x.abs() > 1e-3)))
        .prop_map(move |v| Mat::from_shape_vec((rows, cols), v).unwrap())
}

fn batch_pair() -> impl Strategy<Value = (Mat, Mat)> {
    (1usize..10, 2usize..12).prop_flat_map(|(n, d)| (matrix(n, d), matrix(n, d)))
}

fn loss_cfg() -> impl Strategy<Value = LossConfig> {
    (0.02f64..2.0, prop::bool::ANY).prop_map(|(temperature, mean)| LossConfig {
        temperature,
        reduction: if mean { Reduction::Mean } else { Reduction::Sum },
        ..LossConfig::default()
    })
}

fn tie_free(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::hash_set(-10_000i64..10_000, len).prop_map(|s| s.into_iter().map(|v| v as f64 / 7.0).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_are_non_negative((a, b) in batch_pair(), cfg in loss_cfg()) {
        prop_assert!(sentence_cl_loss(&a, &b, &cfg).unwrap() >= 0.0);
        prop_assert!(entity_cl_loss(&a, &b, &cfg).unwrap() >= 0.0);
    }

    #[test]
    fn losses_ignore_positive_scaling((a, b) in batch_pair(), cfg in loss_cfg(), k in 0.01f64..100.0) {
        let base = sentence_cl_loss(&a, &b, &cfg).unwrap();
        let scaled = sentence_cl_loss(&(&a * k), &b, &cfg).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn losses_are_permutation_equivariant((a, b) in batch_pair(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let cfg = LossConfig::default();
        let mut order: Vec<usize> = (0..a.nrows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pa = a.select(Axis(0), &order);
        let pb = b.select(Axis(0), &order);
        let base = entity_cl_loss(&a, &b, &cfg).unwrap();
        prop_assert!((base - entity_cl_loss(&pa, &pb, &cfg).unwrap()).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn single_row_loss_is_zero(a in matrix(1, 6), b in matrix(1, 6)) {
        prop_assert_eq!(sentence_cl_loss(&a, &b, &LossConfig::default()).unwrap(), 0.0);
        prop_assert_eq!(entity_cl_loss(&a, &b, &LossConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn tape_loss_matches_plain_loss((a, b) in batch_pair(), cfg in loss_cfg()) {
        let mut tape = Tape::new();
        let va = tape.constant(a.clone());
        let vb = tape.constant(b.clone());
        let l = info_nce_on_tape(&mut tape, va, vb, &cfg);
        let plain = sentence_cl_loss(&a, &b, &cfg).unwrap();
        prop_assert!((tape.scalar(l) - plain).abs() <= 1e-9 * plain.max(1.0));
    }

    #[test]
    fn cosine_is_bounded_and_symmetric(a in matrix(1, 8), b in matrix(1, 8)) {
        let ab = cosine_similarity(a.row(0), b.row(0)).unwrap();
        let ba = cosine_similarity(b.row(0), a.row(0)).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn srocc_is_bounded_and_symmetric(
        x in prop::collection::vec(-5i32..5, 3..40),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|_| rng.random_range(-3i32..3) as f64).collect();
        if let (Ok(a), Ok(b)) = (srocc(&x, &y), srocc(&y, &x)) {
            prop_assert!((-1.0..=1.0).contains(&a));
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn srocc_reversal_is_minus_one(x in tie_free(20)) {
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(srocc(&x, &x).unwrap(), 1.0);
        prop_assert_eq!(srocc(&x, &neg).unwrap(), -1.0);
    }

    #[test]
    fn srocc_survives_monotone_maps(x in tie_free(25), y in tie_free(25), k in 0.1f64..3.0, c in -5.0f64..5.0) {
        let fx: Vec<f64> = x.iter().map(|v| (v / 500.0).tanh() * k + c).collect();
        let gy: Vec<f64> = y.iter().map(|v| v * v * v + v).collect();
        prop_assert!((srocc(&x, &y).unwrap() - srocc(&fx, &gy).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn geometry_bounds(m in (2usize..12, 2usize..8).prop_flat_map(|(n, d)| matrix(n, d))) {
        let rows: Vec<_> = m.rows().into_iter().collect();
        prop_assert!(uniformity(&rows).unwrap() <= 1e-12);
        let pairs: Vec<_> = rows.windows(2).map(|w| (w[0], w[1])).collect();
        let a = alignment(&pairs).unwrap();
        prop_assert!((0.0..=4.0 + 1e-12).contains(&a));
    }

    #[test]
    fn token_shuffle_permutes_words_only(
        words in prop::collection::vec(3u32..50, 0..20),
        pad in 0usize..5,
        seed in any::<u64>(),
    ) {
        let ids: Vec<u32> = std::iter::once(CLS).chain(words.iter().copied()).chain(std::iter::repeat_n(PAD, pad)).collect();
        let out = token_shuffle(&ids, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(out.len(), ids.len());
        prop_assert_eq!(out[0], CLS);
        prop_assert!(out[words.len() + 1..].iter().all(|&t| t == PAD));
        let mut a = words.clone();
        let mut b = out[1..=words.len()].to_vec();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cutoff_picks_distinct_rows(n in 0usize..64, rate in 0.0f64..0.99, seed in any::<u64>()) {
        let rows = cutoff_rows(n, rate, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(rows.len(), (rate * n as f64).floor() as usize);
        prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(rows.iter().all(|&r| r < n));
    }

    #[test]
    fn config_overrides_round_trip(
        lambda in 0.0f64..5.0,
        batch in 1usize..256,
        strategy in prop::sample::select(vec!["naive", "remove", "replace"]),
        pooling in prop::sample::select(vec!["cls", "last_avg", "first_last_avg"]),
    ) {
        let overrides = vec![
            format!("lambda={lambda:?}"),
            format!("batch_size={batch}"),
            format!("strategy={strategy}"),
            format!("pooling={pooling}"),
        ];
        let cfg = TrainConfig::from_toml_with_overrides("", &overrides).unwrap();
        prop_assert_eq!(cfg.lambda, lambda);
        prop_assert_eq!(cfg.batch_size, batch);
        prop_assert_eq!(cfg.strategy.as_str(), strategy);
        prop_assert_eq!(cfg.pooling.as_str(), pooling);
        let again = TrainConfig::from_toml_with_overrides(&cfg.to_toml(), &[]).unwrap();
        prop_assert_eq!(again, cfg);
    }
}

fn corpus_dictionary() -> DefinitionDictionary {
    let rec = |id: &str, surfaces: &[&str]| DictionaryRecord {
        id: id.into(),
        name: surfaces[0].into(),
        surfaces: surfaces.iter().map(|s| s.to_string()).collect(),
        definition: format!("definition of {id}"),
    };
    DefinitionDictionary::from_records([
        rec("E1", &["heart failure", "heart"]),
        rec("E2", &["renal failure"]),
        rec("E3", &["fever"]),
        rec("E4", &["acute renal failure"]),
    ])
    .unwrap()
}

const WORDS: [&str; 10] = ["heart", "failure", "renal", "acute", "fever", "the", "patient", "had", "no", "pain"];

fn sentence_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..14).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn annotation_spans_are_disjoint(text in sentence_text()) {
        let s = Sentence::new("s", text);
        let mentions = annotate_entities(&s, &corpus_dictionary());
        for (i, a) in mentions.iter().enumerate() {
            prop_assert!(a.span.end <= s.tokens.len());
            for b in &mentions[i + 1..] {
                prop_assert!(!a.span.overlaps(&b.span));
            }
        }
    }

    #[test]
    fn partition_contracts(texts in prop::collection::vec(sentence_text(), 1..30), frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let dict = corpus_dictionary();
        let sentences: Vec<Sentence> = texts.iter().enumerate().map(|(i, t)| Sentence::new(format!("s{i}"), t.clone())).collect();
        let split = partition(&sentences, &dict);
        let again = partition(&split.s_all.iter().map(|a| a.sentence.clone()).collect::<Vec<_>>(), &dict);
        prop_assert_eq!(&again, &split);
        prop_assert!(split.s_ent.iter().all(|s| s.mentions.iter().any(|m| dict.contains(&m.entity_id))));

        let stats = entity_statistics(&split);
        prop_assert_eq!(stats.total_occurrences, split.s_ent.iter().map(|s| s.mentions.len()).sum::<usize>());

        let total = split.s_ent.len().min(split.s_none.len()) * 2;
        if let Ok(mixed) = mix_split(&split, frac, total, seed) {
            prop_assert_eq!(mixed.len(), total);
            let ent = mixed.iter().filter(|s| s.has_entities()).count();
            prop_assert_eq!(ent, (total as f64 * frac).round() as usize);
            let ids: HashSet<_> = mixed.iter().map(|s| &s.sentence.id).collect();
            prop_assert_eq!(ids.len(), total);
        }
    }
}

/// Pool of sentences each mentioning one to three entities drawn from `k`.
fn pool(k: usize, size: usize, seed: u64) -> Vec<AnnotatedSentence> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|i| {
            let n = rng.random_range(1..=3);
            let mentions = (0..n)
                .map(|j| EntityMention {
                    entity_id: format!("e{}", rng.random_range(0..k)),
                    surface: "x".into(),
                    span: TokenSpan::new(j, j + 1),
                })
                .collect();
            AnnotatedSentence {
                sentence: Sentence::new(format!("p{i}"), "x x x"),
                mentions,
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dedup_strategies(k in 40usize..200, size in 1usize..24, seed in any::<u64>()) {
        let items = pool(k, 300, seed);
        let draw = &items[..size];
        let naive = make_batch(&mut draw.iter().cloned(), size, DedupStrategy::Naive, &items, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(&naive.sentences, &draw.to_vec());

        let remove = make_batch(&mut draw.iter().cloned(), size, DedupStrategy::Remove, &items, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut it = draw.iter();
        prop_assert!(remove.sentences.iter().all(|s| it.any(|d| d == s)));
        prop_assert!(!remove.has_duplicate_entities());

        let run = || make_batch(&mut draw.iter().cloned(), size, DedupStrategy::Replace, &items, &mut ChaCha8Rng::seed_from_u64(seed));
        let replace = run().unwrap();
        let ids = replace.assigned_ids();
        prop_assert_eq!(ids.iter().collect::<HashSet<_>>().len(), replace.entity_subset_indices.len());
        prop_assert_eq!(replace.len(), size);
        prop_assert_eq!(run().unwrap(), replace);
    }
}

fn small_model(seed: u64, dropout_rate: f64) -> Model {
    let words: Vec<Vec<String>> = vec![(0..30).map(|i| format!("w{i}")).collect()];
    let vocab = Vocab::build(words.iter().map(|w| w.as_slice()), 1);
    let cfg = EncoderConfig {
        hidden_dim: 8,
        layer_count: 2,
        head_count: 2,
        ffn_dim: 16,
        max_tokens: 32,
        dropout_rate,
        entity_encoder: EntityEncoderVariant::Mean,
        ..EncoderConfig::default()
    };
    Model::new(cfg, vocab, seed).unwrap()
}

fn id_seq() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(3u32..33, 1..12).prop_map(|w| std::iter::once(CLS).chain(w).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn padding_never_changes_pooled_embeddings(
        seqs in prop::collection::vec(id_seq(), 1..5),
        extra in 1usize..6,
        seed in 0u64..4,
    ) {
        let model = small_model(seed, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plain = model.encode(&seqs, false, &mut rng).unwrap();
        let longest = seqs.iter().map(Vec::len).max().unwrap() + extra;
        let padded: Vec<Vec<u32>> = seqs
            .iter()
            .map(|s| s.iter().copied().chain(std::iter::repeat(PAD)).take(longest).collect())
            .collect();
        let pad = model.encode(&padded, false, &mut rng).unwrap();
        let alone = model.encode(&seqs[..1], false, &mut rng).unwrap();
        for p in PoolingStrategy::ALL {
            for (a, b) in plain.iter().zip(&pad) {
                prop_assert_eq!(pool_sentence(a, p).unwrap(), pool_sentence(b, p).unwrap());
            }
            prop_assert_eq!(pool_sentence(&alone[0], p).unwrap(), pool_sentence(&plain[0], p).unwrap());
        }
    }

    #[test]
    fn pooling_matches_direct_recomputation(seq in id_seq(), pad in 0usize..4, seed in 0u64..4) {
        let model = small_model(seed, 0.1);
        let mut padded = seq.clone();
        padded.extend(std::iter::repeat_n(PAD, pad));
        let te = model.encode(&[padded], false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().remove(0);
        let n = seq.len();
        let mean = |layer: usize| te.per_layer[layer].rows().into_iter().take(n).fold(Array1::zeros(8), |acc, r| acc + r) / n as f64;
        let direct = 0.5 * mean(1) + 0.5 * mean(te.per_layer.len() - 1);
        let pooled = pool_sentence(&te, PoolingStrategy::FirstLastAvg).unwrap();
        prop_assert!((&pooled - &direct).iter().all(|d| d.abs() < 1e-7));

        if n >= 2 {
            let span = TokenSpan::new(1, n);
            let tokens = extract_entity_tokens(&te, span, PoolingStrategy::FirstLastAvg).unwrap();
            let encoded = model.entity_encode(&tokens, None).unwrap();
            let oracle = tokens.mean_axis(Axis(0)).unwrap();
            prop_assert!((&encoded - &oracle).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn zero_dropout_passes_coincide(seqs in prop::collection::vec(id_seq(), 1..4), seed in 0u64..4) {
        let model = small_model(seed, 0.0);
        let a = model.encode(&seqs, true, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = model.encode(&seqs, true, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().all(|t| t.per_layer.iter().all(|m| m.iter().all(|v| v.is_finite()))));
    }
}
