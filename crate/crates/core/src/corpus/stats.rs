use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::split::CorpusSplit;

/// Frequency statistics over dictionary mentions in `s_ent`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityStats {
    pub unique_count: usize,
    pub total_occurrences: usize,
    /// Share of occurrences taken by the `ceil(0.1 · unique_count)` most
    /// frequent entities.
    pub top_decile_share: f64,
    pub per_sentence_mean: f64,
    /// Population standard deviation.
    pub per_sentence_std: f64,
}

pub fn entity_frequencies(split: &CorpusSplit) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in &split.s_ent {
        for m in &s.mentions {
            *counts.entry(m.entity_id.clone()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn top_decile_share(counts: &BTreeMap<String, usize>) -> f64 {
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    let mut sorted: Vec<usize> = counts.values().copied().collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let k = (sorted.len() as f64 * 0.1).ceil() as usize;
    sorted[..k].iter().sum::<usize>() as f64 / total as f64
}

pub fn entity_statistics(split: &CorpusSplit) -> EntityStats {
    if split.s_ent.is_empty() {
        return EntityStats::default();
    }
    let counts = entity_frequencies(split);
    let per: Vec<f64> = split.s_ent.iter().map(|s| s.mentions.len() as f64).collect();
    let n = per.len() as f64;
    let mean = per.iter().sum::<f64>() / n;
    let var = per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    EntityStats {
        unique_count: counts.len(),
        total_occurrences: counts.values().sum(),
        top_decile_share: top_decile_share(&counts),
        per_sentence_mean: mean,
        per_sentence_std: var.sqrt(),
    }
}
