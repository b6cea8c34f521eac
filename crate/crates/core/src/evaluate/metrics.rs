use std::io::Write;

use serde::{Deserialize, Serialize};

use super::matrix::BinaryLabels;
use super::stats;
use crate::workersim::{AnnotationEvent, ModifierSet};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl Counts {
    pub fn recall(&self) -> Option<f64> {
        let pos = self.true_positives + self.false_negatives;
        (pos > 0).then(|| self.true_positives as f64 / pos as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let pred = self.true_positives + self.false_positives;
        (pred > 0).then(|| self.true_positives as f64 / pred as f64)
    }
}

/// Micro-averaged quality over all (video, label) pairs. Undefined ratios
/// are `None`, never 0 or 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub minutes_per_video: Option<f64>,
    pub affirmative_per_iteration: Option<f64>,
    pub counts: Counts,
}

impl Metrics {
    pub fn with_timing(mut self, timing: TimingSummary) -> Self {
        self.minutes_per_video = Some(timing.minutes_per_video);
        self.affirmative_per_iteration = Some(timing.affirmative_per_iteration);
        self
    }

    /// Binomial standard errors of recall and precision.
    pub fn standard_errors(&self) -> (Option<f64>, Option<f64>) {
        let c = &self.counts;
        (
            self.recall.map(|r| binomial_se(r, c.true_positives + c.false_negatives)),
            self.precision.map(|p| binomial_se(p, c.true_positives + c.false_positives)),
        )
    }
}

pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

fn check_shape(pred: &BinaryLabels, truth: &BinaryLabels) -> Result<()> {
    if pred.label_count() != truth.label_count() || pred.videos() != truth.videos() {
        return Err(Error::Shape(format!(
            "predictions are {}x{}, truth is {}x{} (video order must match)",
            pred.video_count(),
            pred.label_count(),
            truth.video_count(),
            truth.label_count()
        )));
    }
    Ok(())
}

pub fn metrics(pred: &BinaryLabels, truth: &BinaryLabels) -> Result<Metrics> {
    check_shape(pred, truth)?;
    let mut c = Counts::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, true) => c.false_negatives += 1,
            (false, false) => {}
        }
    }
    Ok(Metrics {
        recall: c.recall(),
        precision: c.precision(),
        minutes_per_video: None,
        affirmative_per_iteration: None,
        counts: c,
    })
}

/// Recall of each label over the videos where it is truly present.
pub fn per_label_recall(pred: &BinaryLabels, truth: &BinaryLabels) -> Result<Vec<Option<f64>>> {
    check_shape(pred, truth)?;
    let n = truth.label_count();
    let mut hit = vec![0u64; n];
    let mut pos = vec![0u64; n];
    for (i, (&p, &t)) in pred.bits().iter().zip(truth.bits()).enumerate() {
        if t {
            pos[i % n] += 1;
            hit[i % n] += u64::from(p);
        }
    }
    Ok(hit
        .iter()
        .zip(&pos)
        .map(|(&h, &p)| (p > 0).then(|| h as f64 / p as f64))
        .collect())
}

/// Pearson correlation between per-label recall and typical duration.
pub fn recall_vs_duration(recall: &[f64], duration: &[f64]) -> Result<f64> {
    if recall.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 labels, got {}",
            recall.len()
        )));
    }
    stats::pearson(duration, recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    /// Cumulative annotation minutes per video over all iterations.
    pub minutes_per_video: f64,
    /// Affirmative gate answers per video per iteration.
    pub affirmative_per_iteration: f64,
}

/// Timing over non-gold events; gold duplicates cost nothing here.
pub fn timing_summary<'e>(
    events: impl IntoIterator<Item = &'e AnnotationEvent>,
    videos: usize,
    iterations: u32,
) -> TimingSummary {
    let (mut seconds, mut yes) = (0.0, 0u64);
    for e in events.into_iter().filter(|e| !e.gold) {
        seconds += e.elapsed;
        yes += u64::from(e.gate);
    }
    let v = videos.max(1) as f64;
    TimingSummary {
        minutes_per_video: seconds / 60.0 / v,
        affirmative_per_iteration: yes as f64 / v / f64::from(iterations.max(1)),
    }
}

/// One row of `experiment,k,iterations,modifiers,recall,precision,minutes_per_video`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub experiment: String,
    pub k: usize,
    pub iterations: u32,
    pub modifiers: ModifierSet,
    pub metrics: Metrics,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn write_metrics_csv(writer: impl Write, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["experiment", "k", "iterations", "modifiers", "recall", "precision", "minutes_per_video"])?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.k.to_string(),
            r.iterations.to_string(),
            r.modifiers.to_string(),
            fmt_opt(r.metrics.recall),
            fmt_opt(r.metrics.precision),
            fmt_opt(r.metrics.minutes_per_video),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::LabelId;
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    fn grid(m: usize, n: usize) -> (Vec<String>, BinaryLabels) {
        let videos: Vec<String> = (0..m).map(|i| format!("v{i}")).collect();
        let labels = BinaryLabels::empty(&videos, n).unwrap();
        (videos, labels)
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let (_, mut truth) = grid(3, 5);
        truth.set(0, LabelId(1), true).unwrap();
        truth.set(2, LabelId(4), true).unwrap();
        let m = metrics(&truth, &truth).unwrap();
        assert_eq!((m.recall, m.precision), (Some(1.0), Some(1.0)));

        let (_, none) = grid(3, 5);
        let m = metrics(&none, &truth).unwrap();
        assert_eq!(m.recall, Some(0.0));
        assert_eq!(m.precision, None);

        let m = metrics(&none, &none).unwrap();
        assert_eq!(m.recall, None);

        let (_, wrong) = grid(2, 5);
        assert!(matches!(metrics(&wrong, &truth), Err(Error::Shape(_))));
    }

    /// Fixture with exactly known counts: four positives per video, 45% of
    /// them found, plus Poisson(0.26) false positives per video.
    #[test]
    fn constructed_fixture() {
        let (_, mut truth) = grid(100, 157);
        let (_, mut pred) = grid(100, 157);
        let mut rng = crate::seed::rng(11);
        let fp_dist = Poisson::new(0.26).unwrap();
        let (mut tp, mut fp) = (0u64, 0u64);
        for v in 0..100 {
            for l in 0..4u32 {
                truth.set(v, LabelId(l), true).unwrap();
                // deterministic 45% hit pattern: 9 of every 20 positives
                if (v * 4 + l as usize) % 20 < 9 {
                    pred.set(v, LabelId(l), true).unwrap();
                    tp += 1;
                }
            }
            let extra = fp_dist.sample(&mut rng) as u32;
            for j in 0..extra {
                let l = 4 + (rng.random_range(0..150u32) + j) % 153;
                if !pred.get(v, LabelId(l)) {
                    pred.set(v, LabelId(l), true).unwrap();
                    fp += 1;
                }
            }
        }
        let m = metrics(&pred, &truth).unwrap();
        assert_eq!(m.counts.true_positives, tp);
        assert_eq!(m.counts.false_positives, fp);
        assert_eq!(tp, 180);
        assert!((m.recall.unwrap() - 0.45).abs() < 1e-12);
        let expected = tp as f64 / (tp + fp) as f64;
        assert!((m.precision.unwrap() - expected).abs() < 1e-12);
        // 180 / (180 + ~26)
        assert!((m.precision.unwrap() - 0.87).abs() < 0.04, "{:?}", m.precision);
    }

    #[test]
    fn per_label() {
        let (_, mut truth) = grid(2, 3);
        let (_, mut pred) = grid(2, 3);
        truth.set(0, LabelId(0), true).unwrap();
        truth.set(1, LabelId(0), true).unwrap();
        pred.set(1, LabelId(0), true).unwrap();
        assert_eq!(per_label_recall(&pred, &truth).unwrap(), vec![Some(0.5), None, None]);
    }

    #[test]
    fn duration_correlation_cases() {
        assert!(recall_vs_duration(&[0.5; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).is_err());
        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r: Vec<f64> = d.iter().map(|x| 0.1 * x).collect();
        assert!((recall_vs_duration(&r, &d).unwrap() - 1.0).abs() < 1e-12);
        assert!(recall_vs_duration(&[0.1, 0.2], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn metrics_csv_leaves_absent_values_empty() {
        let row = MetricsRow {
            experiment: "x".into(),
            k: 5,
            iterations: 2,
            modifiers: ModifierSet::NONE,
            metrics: Metrics {
                recall: Some(0.5),
                ..Metrics::default()
            },
        };
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[row]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "experiment,k,iterations,modifiers,recall,precision,minutes_per_video\nx,5,2,none,0.500000,,\n"
        );
    }
}
