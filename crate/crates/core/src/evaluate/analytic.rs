//! Closed-form expectations for union aggregation over repeated passes.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Expected recall of union aggregation when a budget of `budget` minutes
/// buys `budget / per_iteration` independent passes of recall `r`.
pub fn expected_recall(r: f64, per_iteration: f64, budget: f64) -> Result<f64> {
    if !(per_iteration > 0.0) {
        return Err(Error::out_of_range("t", per_iteration, "> 0"));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::out_of_range("r", r, "[0, 1]"));
    }
    if !(budget >= 0.0) {
        return Err(Error::out_of_range("T", budget, ">= 0"));
    }
    if budget == per_iteration {
        return Ok(r);
    }
    Ok(1.0 - (1.0 - r).powf(budget / per_iteration))
}

/// Expected precision of one pass: `r g / (r g + f (Q - g))`. `None` when
/// nothing is expected to be predicted.
pub fn precision_identity(r: f64, f: f64, g: f64, q_top: f64) -> Option<f64> {
    let tp = r * g;
    let fp = f * (q_top - g);
    (tp + fp > 0.0).then(|| tp / (tp + fp))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnionPrediction {
    pub recall: f64,
    pub precision: Option<f64>,
    pub true_positives: f64,
    pub false_positives: f64,
}

/// Union of `n` independent passes with per-pass recall `r` and
/// per-negative-question false-positive rate `f`, at `g` positives out of
/// `q_top` questions per video.
pub fn analytic_union(r: f64, f: f64, g: f64, q_top: f64, n: u32) -> UnionPrediction {
    union_with_recall(1.0 - (1.0 - r).powi(n as i32), f, g, q_top, n)
}

pub(crate) fn union_with_recall(recall: f64, f: f64, g: f64, q_top: f64, n: u32) -> UnionPrediction {
    let tp = g * recall;
    let fp = (q_top - g) * (1.0 - (1.0 - f).powi(n as i32));
    UnionPrediction {
        recall,
        precision: (tp + fp > 0.0).then(|| tp / (tp + fp)),
        true_positives: tp,
        false_positives: fp,
    }
}

/// Recall on the easy component so that the mixture mean equals `r`.
pub fn easy_recall(r: f64, hard_fraction: f64, hard_multiplier: f64) -> f64 {
    if hard_fraction <= 0.0 {
        return r;
    }
    (r * (1.0 - hard_fraction * hard_multiplier) / (1.0 - hard_fraction)).min(1.0)
}

/// Union recall after `n` passes when a fraction `h` of pairs is detected
/// with recall `r * m` by every worker and the rest with the easy recall.
pub fn mixture_union_recall(r: f64, n: u32, h: f64, m: f64) -> f64 {
    let n = n as i32;
    let easy = easy_recall(r, h, m);
    (1.0 - h) * (1.0 - (1.0 - easy).powi(n)) + h * (1.0 - (1.0 - r * m).powi(n))
}
