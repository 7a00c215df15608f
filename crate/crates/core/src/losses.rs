//! Cosine similarity and the in-batch InfoNCE objectives.
//!
//! Both contrastive losses share one form. For anchors `a_i` and candidates
//! `b_j`,
//!
//! ```text
//! L = -Σ_i log( exp(cos(a_i, b_i)/τ) / Σ_j exp(cos(a_i, b_j)/τ) )
//! ```
//!
//! The sentence loss pairs each sentence with its second view. The entity
//! loss pairs each entity embedding with its definition embedding.

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mat, Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        })
    }
}

impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            _ => Err(Error::config("loss.reduction", format!("unknown reduction {s:?} (sum, mean)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub temperature: f64,
    pub lambda: f64,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.05,
            lambda: 0.1,
            reduction: Reduction::Sum,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("loss.temperature", "must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("loss.lambda", "must be non-negative"));
        }
        Ok(())
    }
}

pub fn cosine_similarity(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let na2 = a.dot(&a);
    let nb2 = b.dot(&b);
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((a.dot(&b) / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

fn info_nce(anchors: &Mat, candidates: &Mat, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    if anchors.dim() != candidates.dim() {
        return Err(Error::Shape(format!("{:?} anchors vs {:?} candidates", anchors.dim(), candidates.dim())));
    }
    let n = anchors.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let logits = (0..n)
            .map(|j| cosine_similarity(anchors.row(i), candidates.row(j)).map(|s| s / cfg.temperature))
            .collect::<Result<Vec<f64>>>()?;
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - logits[i];
    }
    Ok(match cfg.reduction {
        Reduction::Mean if n > 0 => total / n as f64,
        _ => total,
    })
}

/// Sentence objective over `h` (first views, one row each) and `h_plus`.
pub fn sentence_cl_loss(h: &Mat, h_plus: &Mat, cfg: &LossConfig) -> Result<f64> {
    if h.nrows() == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    info_nce(h, h_plus, cfg)
}

/// Entity objective over matched rows of `h_ent` and `h_def`. Zero when the
/// batch carries no entities.
pub fn entity_cl_loss(h_ent: &Mat, h_def: &Mat, cfg: &LossConfig) -> Result<f64> {
    info_nce(h_ent, h_def, cfg)
}

pub fn combined_loss(l_sen: f64, l_ent: f64, cfg: &LossConfig) -> f64 {
    l_sen + cfg.lambda * l_ent
}

/// Differentiable InfoNCE between row sets `anchors` and `candidates`.
pub fn info_nce_on_tape(tape: &mut Tape, anchors: Var, candidates: Var, cfg: &LossConfig) -> Var {
    let a = tape.normalize_rows(anchors);
    let b = tape.normalize_rows(candidates);
    let sim = tape.matmul_t(a, b);
    let logits = tape.scale(sim, 1.0 / cfg.temperature);
    tape.diag_nll(logits, cfg.reduction == Reduction::Mean)
}
