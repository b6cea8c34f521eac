use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::simulate::simulate_campaign;
use crate::costmodel::{IterationClock, TimeModel};
use crate::evaluate::{
    aggregate, expected_recall, metrics, timing_summary, write_metrics_csv, BinaryLabels, LabelMatrix, Metrics,
    MetricsRow,
};
use crate::planner::{iteration_minutes, RecallModel};
use crate::taxonomy::Taxonomy;
use crate::workersim::{
    sample_worker_pool, synthesize_truth, AnnotationEvent, ModifierSet, Regime, Simulator, SynthOptions, VideoTruth,
    Worker, WorkerBehavior,
};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    QuestionCountSweep,
    ExpectedRecallBudget,
    MultiIteration,
    LengthBreakdown,
    WorkerCorrelations,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::QuestionCountSweep,
        Experiment::ExpectedRecallBudget,
        Experiment::MultiIteration,
        Experiment::LengthBreakdown,
        Experiment::WorkerCorrelations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::QuestionCountSweep => "question-count-sweep",
            Experiment::ExpectedRecallBudget => "expected-recall-budget",
            Experiment::MultiIteration => "multi-iteration",
            Experiment::LengthBreakdown => "length-breakdown",
            Experiment::WorkerCorrelations => "worker-correlations",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "experiment",
                id: s.to_string(),
            })
    }
}

/// Scale and calibration of a reproduction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub videos: usize,
    pub workers: usize,
    pub behavior: WorkerBehavior,
    pub time_model: TimeModel,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            videos: 2000,
            workers: 100,
            behavior: WorkerBehavior::reference_correlated(),
            time_model: TimeModel::default(),
        }
    }
}

impl ExperimentSettings {
    fn clock(&self, q_top: usize) -> IterationClock {
        IterationClock::with_observed(self.time_model, q_top, self.behavior.observed_iterations())
    }
}

const SWEEP_K: [usize; 9] = [1, 2, 3, 4, 5, 7, 13, 26, 52];
const BUDGET_K: [usize; 5] = [1, 5, 13, 26, 52];
const MULTI_K: [usize; 2] = [1, 52];
const MULTI_MAX_N: u32 = 5;
const LENGTH_K: [usize; 2] = [5, 52];
const LENGTH_BUDGET_MINUTES: f64 = 4.4;
const LENGTH_BUCKETS: [(f64, f64); 3] = [(0.0, 20.0), (20.0, 40.0), (40.0, 60.0)];

/// Runs `experiment` and returns its CSV text.
pub fn run_experiment(
    experiment: Experiment,
    tax: &Taxonomy,
    settings: &ExperimentSettings,
    master_seed: u64,
) -> Result<String> {
    let mut buf = Vec::new();
    match experiment {
        Experiment::QuestionCountSweep => question_count_sweep(&mut buf, tax, settings, master_seed)?,
        Experiment::ExpectedRecallBudget => expected_recall_budget(&mut buf, tax, settings)?,
        Experiment::MultiIteration => multi_iteration(&mut buf, tax, settings, master_seed)?,
        Experiment::LengthBreakdown => length_breakdown(&mut buf, tax, settings, master_seed)?,
        Experiment::WorkerCorrelations => worker_correlations(&mut buf, tax, settings, master_seed)?,
    }
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Runs `experiment` and writes its CSV to `out` atomically (temporary file
/// in the same directory, then rename).
pub fn reproduce(
    experiment: Experiment,
    tax: &Taxonomy,
    settings: &ExperimentSettings,
    master_seed: u64,
    out: &Path,
) -> Result<()> {
    let text = run_experiment(experiment, tax, settings, master_seed)?;
    write_atomic(out, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = std::fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|()| std::fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn setup(tax: &Taxonomy, settings: &ExperimentSettings, master_seed: u64) -> Result<(Vec<VideoTruth>, Vec<Worker>)> {
    let truths = synthesize_truth(tax, settings.videos, &SynthOptions::default(), seed::mix(master_seed, 1))?;
    let workers = sample_worker_pool(settings.workers, 0.0, seed::mix(master_seed, 2))?;
    Ok((truths, workers))
}

fn ids(truths: &[VideoTruth]) -> Vec<String> {
    truths.iter().map(|t| t.video.clone()).collect()
}

fn modifier_options(k: usize) -> Vec<ModifierSet> {
    let rec = ModifierSet::recommended(Regime::of(k));
    if rec.is_empty() {
        vec![ModifierSet::NONE]
    } else {
        vec![ModifierSet::NONE, rec]
    }
}

/// Evaluates the first `n` iterations of `events`.
fn evaluate_prefix(
    tax: &Taxonomy,
    videos: &[String],
    truth: &BinaryLabels,
    events: &[AnnotationEvent],
    n: u32,
) -> Result<Metrics> {
    let prefix: Vec<&AnnotationEvent> = events.iter().filter(|e| e.iteration < n).collect();
    let pred = LabelMatrix::from_events(tax, videos, prefix.iter().copied())?.threshold(1);
    Ok(metrics(&pred, truth)?.with_timing(timing_summary(prefix.iter().copied(), videos.len(), n)))
}

fn question_count_sweep(
    out: &mut Vec<u8>,
    tax: &Taxonomy,
    settings: &ExperimentSettings,
    master_seed: u64,
) -> Result<()> {
    let (truths, workers) = setup(tax, settings, master_seed)?;
    let videos = ids(&truths);
    let truth = BinaryLabels::from_truth(&truths, tax.label_count())?;
    let sim = Simulator::with_clock(tax, &settings.behavior, settings.clock(tax.question_count()));
    let mut rows = Vec::new();
    for k in SWEEP_K.into_iter().filter(|k| *k <= tax.question_count()) {
        for modifiers in modifier_options(k) {
            let s = seed::stream_seed(master_seed, &[k as u64, modifiers.to_string().len() as u64]);
            let events = simulate_campaign(&sim, &truths, k, 1, modifiers, &workers, s)?;
            let pred = aggregate(tax, &videos, &events, 1)?;
            rows.push(MetricsRow {
                experiment: Experiment::QuestionCountSweep.name().into(),
                k,
                iterations: 1,
                modifiers,
                metrics: metrics(&pred, &truth)?.with_timing(timing_summary(&events, videos.len(), 1)),
            });
        }
    }
    write_metrics_csv(out, &rows)
}

fn expected_recall_budget(out: &mut Vec<u8>, tax: &Taxonomy, settings: &ExperimentSettings) -> Result<()> {
    let b = &settings.behavior;
    let clock = settings.clock(tax.question_count());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["k", "budget_minutes", "iteration_minutes", "expected_recall", "whole_iterations", "union_recall"])?;
    for k in BUDGET_K.into_iter().filter(|k| *k <= tax.question_count()) {
        let (t, _) = iteration_minutes(b, &clock, k, ModifierSet::NONE)?;
        let r = b.recall_at(k);
        for step in 1..=20 {
            let budget = f64::from(step) * 0.5;
            let n = (budget / t).floor() as u32;
            w.write_record([
                k.to_string(),
                format!("{budget:.1}"),
                format!("{t:.6}"),
                format!("{:.6}", expected_recall(r, t, budget)?),
                n.to_string(),
                format!("{:.6}", RecallModel::Independent.union_recall(r, n)),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<experiment>", e))?;
    Ok(())
}

fn multi_iteration(out: &mut Vec<u8>, tax: &Taxonomy, settings: &ExperimentSettings, master_seed: u64) -> Result<()> {
    let (truths, workers) = setup(tax, settings, master_seed)?;
    let videos = ids(&truths);
    let truth = BinaryLabels::from_truth(&truths, tax.label_count())?;
    let sim = Simulator::with_clock(tax, &settings.behavior, settings.clock(tax.question_count()));
    let mut rows = Vec::new();
    for k in MULTI_K.into_iter().filter(|k| *k <= tax.question_count()) {
        let s = seed::stream_seed(master_seed, &[k as u64]);
        let events = simulate_campaign(&sim, &truths, k, MULTI_MAX_N, ModifierSet::NONE, &workers, s)?;
        for n in 1..=MULTI_MAX_N {
            rows.push(MetricsRow {
                experiment: Experiment::MultiIteration.name().into(),
                k,
                iterations: n,
                modifiers: ModifierSet::NONE,
                metrics: evaluate_prefix(tax, &videos, &truth, &events, n)?,
            });
        }
    }
    write_metrics_csv(out, &rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

fn length_breakdown(out: &mut Vec<u8>, tax: &Taxonomy, settings: &ExperimentSettings, master_seed: u64) -> Result<()> {
    let (truths, workers) = setup(tax, settings, master_seed)?;
    let base = settings.clock(tax.question_count());
    let sim = Simulator::with_clock(tax, &settings.behavior, base.clone());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["bucket", "videos", "k", "iterations", "recall", "precision", "minutes_per_video"])?;
    for (lo, hi) in LENGTH_BUCKETS {
        let bucket: Vec<VideoTruth> = truths
            .iter()
            .filter(|t| t.duration >= lo && (t.duration < hi || (hi == LENGTH_BUCKETS[2].1 && t.duration <= hi)))
            .cloned()
            .collect();
        let label = format!("{lo:.0}-{hi:.0}");
        if bucket.is_empty() {
            continue;
        }
        let mean_len = bucket.iter().map(|t| t.duration).sum::<f64>() / bucket.len() as f64;
        let clock = base.for_video_length(mean_len);
        let videos = ids(&bucket);
        let truth = BinaryLabels::from_truth(&bucket, tax.label_count())?;
        for k in LENGTH_K.into_iter().filter(|k| *k <= tax.question_count()) {
            let (t, _) = iteration_minutes(&settings.behavior, &clock, k, ModifierSet::NONE)?;
            let n = (LENGTH_BUDGET_MINUTES / t).floor() as u32;
            let (recall, precision, minutes) = if n == 0 {
                (Some(0.0), None, 0.0)
            } else {
                let s = seed::stream_seed(master_seed, &[k as u64, lo as u64]);
                let events = simulate_campaign(&sim, &bucket, k, n, ModifierSet::NONE, &workers, s)?;
                let m = evaluate_prefix(tax, &videos, &truth, &events, n)?;
                (m.recall, m.precision, m.minutes_per_video.unwrap_or(0.0))
            };
            w.write_record([
                label.clone(),
                bucket.len().to_string(),
                k.to_string(),
                n.to_string(),
                fmt_opt(recall),
                fmt_opt(precision),
                format!("{minutes:.6}"),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<experiment>", e))?;
    Ok(())
}

#[derive(Default)]
struct WorkerTally {
    task_seconds: BTreeMap<(String, u32), f64>,
    tp: u64,
    positives: u64,
    selected: u64,
    yes: u64,
    answers: u64,
}

fn worker_correlations(
    out: &mut Vec<u8>,
    tax: &Taxonomy,
    settings: &ExperimentSettings,
    master_seed: u64,
) -> Result<()> {
    let (truths, workers) = setup(tax, settings, master_seed)?;
    let sim = Simulator::with_clock(tax, &settings.behavior, settings.clock(tax.question_count()));
    let k = tax.question_count();
    let events = simulate_campaign(&sim, &truths, k, 1, ModifierSet::NONE, &workers, master_seed)?;
    let by_video: BTreeMap<&str, &VideoTruth> = truths.iter().map(|t| (t.video.as_str(), t)).collect();
    let mut tallies: BTreeMap<&str, WorkerTally> = BTreeMap::new();
    for e in &events {
        let t = tallies.entry(e.worker.as_str()).or_default();
        let truth = by_video[e.video.as_str()];
        let q = tax.question(e.question).expect("simulated questions exist");
        *t.task_seconds.entry((e.video.clone(), e.iteration)).or_insert(0.0) += e.elapsed;
        t.positives += q.members.iter().filter(|l| truth.has_label(**l)).count() as u64;
        t.tp += e.members.iter().filter(|l| truth.has_label(**l)).count() as u64;
        t.selected += e.members.len() as u64;
        t.yes += u64::from(e.gate);
        t.answers += 1;
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["worker", "tasks", "median_seconds", "recall", "precision", "positive_rate"])?;
    for (id, t) in tallies {
        let secs: Vec<f64> = t.task_seconds.values().copied().collect();
        w.write_record([
            id.to_string(),
            secs.len().to_string(),
            format!("{:.6}", crate::evaluate::stats::median(&secs).unwrap_or(0.0)),
            fmt_opt((t.positives > 0).then(|| t.tp as f64 / t.positives as f64)),
            fmt_opt((t.selected > 0).then(|| t.tp as f64 / t.selected as f64)),
            format!("{:.6}", t.yes as f64 / t.answers.max(1) as f64),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<experiment>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentSettings {
        ExperimentSettings {
            videos: 300,
            workers: 20,
            ..ExperimentSettings::default()
        }
    }

    fn rows(text: &str) -> Vec<Vec<String>> {
        text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
    }

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("no-such-experiment".parse::<Experiment>().is_err());
    }

    #[test]
    fn multi_iteration_all_question_rows_dominate() {
        let tax = Taxonomy::sample();
        let text = run_experiment(Experiment::MultiIteration, &tax, &small(), 7).unwrap();
        let r = rows(&text);
        assert_eq!(r.len(), 10);
        let recall = |k: &str, n: &str| r.iter().find(|x| x[1] == k && x[2] == n).unwrap()[4].parse::<f64>().unwrap();
        let minutes = |k: &str, n: &str| r.iter().find(|x| x[1] == k && x[2] == n).unwrap()[6].parse::<f64>().unwrap();
        // five all-question iterations cost less than one single-question pass
        assert!(minutes("52", "5") < minutes("1", "1"));
        assert!(recall("52", "5") > recall("1", "1"));
        for n in 1..5 {
            assert!(recall("52", &(n + 1).to_string()) >= recall("52", &n.to_string()));
        }
    }

    #[test]
    fn long_videos_widen_the_gap() {
        let tax = Taxonomy::sample();
        let text = run_experiment(Experiment::LengthBreakdown, &tax, &small(), 7).unwrap();
        let r = rows(&text);
        let recall = |b: &str, k: &str| r.iter().find(|x| x[0] == b && x[2] == k).unwrap()[4].parse::<f64>().unwrap();
        let gap_short = recall("0-20", "52") - recall("0-20", "5");
        let gap_long = recall("40-60", "52") - recall("40-60", "5");
        assert!(gap_long > gap_short, "{gap_short} vs {gap_long}");
    }

    #[test]
    fn deterministic_and_atomic() {
        let tax = Taxonomy::sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        reproduce(Experiment::ExpectedRecallBudget, &tax, &small(), 3, &path).unwrap();
        let a = std::fs::read(&path).unwrap();
        reproduce(Experiment::ExpectedRecallBudget, &tax, &small(), 3, &path).unwrap();
        assert_eq!(a, std::fs::read(&path).unwrap());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("k,budget_minutes,iteration_minutes,expected_recall,whole_iterations,union_recall\n"));
    }
}
