use std::fmt;

use serde::{Deserialize, Serialize};

use super::ingest::WorkerStats;
use crate::evaluate::stats::mad;
use crate::{Error, Result};

/// Consistency constant turning a MAD into a normal standard deviation.
const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    GoldRecall,
    MedianSeconds,
    PositiveRate,
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signal::GoldRecall => "gold_recall",
            Signal::MedianSeconds => "median_seconds",
            Signal::PositiveRate => "positive_rate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcThresholds {
    /// Robust z-score beyond which a signal is flagged.
    pub z: f64,
    pub min_workers: usize,
    /// Lower bounds on the robust spread, so a near-constant pool does not
    /// flag tiny differences. The time floor is relative to the median.
    pub gold_recall_floor: f64,
    pub relative_seconds_floor: f64,
    pub positive_rate_floor: f64,
}

impl Default for QcThresholds {
    fn default() -> Self {
        Self {
            z: 3.0,
            min_workers: 5,
            gold_recall_floor: 0.02,
            relative_seconds_floor: 0.02,
            positive_rate_floor: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcFlag {
    pub worker: String,
    /// Every signal beyond the threshold with its robust z-score.
    pub signals: Vec<(Signal, f64)>,
}

impl QcFlag {
    pub fn has(&self, signal: Signal) -> bool {
        self.signals.iter().any(|(s, _)| *s == signal)
    }
}

fn robust_z(values: &[Option<f64>], floor: impl Fn(f64) -> f64) -> Vec<Option<f64>> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    let Some((med, spread)) = mad(&present) else {
        return vec![None; values.len()];
    };
    let scale = (MAD_SCALE * spread).max(floor(med)).max(f64::MIN_POSITIVE);
    values.iter().map(|v| v.map(|x| (x - med) / scale)).collect()
}

/// Advisory outlier flags: workers whose gold recall, median task time or
/// positive rate lies more than `z` robust standard deviations from the
/// pool median. Workers without gold answers are not judged on gold recall.
pub fn qc_flag(stats: &[WorkerStats], thresholds: &QcThresholds) -> Result<Vec<QcFlag>> {
    if stats.len() < thresholds.min_workers {
        return Err(Error::TooFewWorkers {
            found: stats.len(),
            required: thresholds.min_workers,
        });
    }
    let gold = robust_z(&stats.iter().map(|s| s.gold_recall).collect::<Vec<_>>(), |_| {
        thresholds.gold_recall_floor
    });
    let secs = robust_z(
        &stats.iter().map(|s| Some(s.median_seconds)).collect::<Vec<_>>(),
        |m| thresholds.relative_seconds_floor * m.abs(),
    );
    let pos = robust_z(&stats.iter().map(|s| Some(s.positive_rate)).collect::<Vec<_>>(), |_| {
        thresholds.positive_rate_floor
    });
    Ok(stats
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let signals: Vec<(Signal, f64)> = [
                (Signal::GoldRecall, gold[i]),
                (Signal::MedianSeconds, secs[i]),
                (Signal::PositiveRate, pos[i]),
            ]
            .into_iter()
            .filter_map(|(sig, z)| z.filter(|z| z.abs() > thresholds.z).map(|z| (sig, z)))
            .collect();
            (!signals.is_empty()).then(|| QcFlag {
                worker: s.worker.clone(),
                signals,
            })
        })
        .collect())
}
