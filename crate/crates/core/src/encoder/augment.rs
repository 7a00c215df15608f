//! Positive-pair augmentations: token cutoff and token shuffle.

use ndarray::Axis;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{CLS, PAD};
use crate::autodiff::Mat;

/// How the second view of each sentence is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentMode {
    /// A second pass with an independent dropout mask.
    #[default]
    Dropout,
    /// Token cutoff on the embedding output, dropout off.
    Cutoff,
    /// Token order shuffle, dropout off.
    Shuffle,
}

/// Uniformly chosen `⌊rate · n⌋` distinct row indices in `0..n`, sorted.
pub fn cutoff_rows<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<usize> {
    assert!((0.0..1.0).contains(&rate), "cutoff rate {rate} outside [0, 1)");
    let k = (rate * n as f64).floor() as usize;
    let mut rows = index::sample(rng, n, k).into_vec();
    rows.sort_unstable();
    rows
}

/// Zeroes `⌊rate · n⌋` of the first `valid` rows of `x`.
pub fn token_cutoff<R: Rng + ?Sized>(x: &Mat, valid: usize, rate: f64, rng: &mut R) -> Mat {
    let mut out = x.clone();
    for r in cutoff_rows(valid.min(x.nrows()), rate, rng) {
        out.index_axis_mut(Axis(0), r).fill(0.0);
    }
    out
}

/// Permutes the word-token ids of a sequence. `[CLS]` and padding stay put.
pub fn token_shuffle<R: Rng + ?Sized>(ids: &[u32], rng: &mut R) -> Vec<u32> {
    let slots: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] != PAD && ids[i] != CLS).collect();
    let mut out = ids.to_vec();
    if slots.len() < 2 {
        return out;
    }
    let mut values: Vec<u32> = slots.iter().map(|&i| ids[i]).collect();
    values.shuffle(rng);
    for (slot, v) in slots.into_iter().zip(values) {
        out[slot] = v;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cutoff_counts() {
        let x = Mat::from_elem((4, 3), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(token_cutoff(&x, 4, 0.0, &mut rng), x);
        let y = token_cutoff(&x, 4, 0.5, &mut rng);
        let zero_rows = y.rows().into_iter().filter(|r| r.iter().all(|&v| v == 0.0)).count();
        assert_eq!(zero_rows, 2);
    }

    #[test]
    fn cutoff_is_reproducible() {
        let a = cutoff_rows(20, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = cutoff_rows(20, 0.3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(token_shuffle(&[CLS, 7], &mut rng), [CLS, 7]);
        let ids = [CLS, 5, 6, 7, 8, 9, PAD, PAD];
        let out = token_shuffle(&ids, &mut rng);
        assert_eq!(out[0], CLS);
        assert_eq!(&out[6..], [PAD, PAD]);
        let mut a = out.clone();
        a.sort_unstable();
        let mut b = ids.to_vec();
        b.sort_unstable();
        assert_eq!(a, b);
    }

    #[test]
    fn shuffle_is_reproducible() {
        let ids = [CLS, 5, 6, 7, 8, 9, 10, 11];
        let a = token_shuffle(&ids, &mut ChaCha8Rng::seed_from_u64(3));
        let b = token_shuffle(&ids, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
    }
}
