use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::evaluate::stats::median;
use crate::taxonomy::Taxonomy;
use crate::workersim::{read_events_csv, AnnotationEvent};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub worker: String,
    /// Distinct (video, iteration) tasks answered.
    pub tasks: u64,
    pub median_seconds: f64,
    /// Share of gold duplicates answered yes; absent without gold.
    pub gold_recall: Option<f64>,
    /// Share of regular questions answered yes.
    pub positive_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enjoyment: Option<String>,
}

#[derive(Debug, Clone, Default)]
struct WorkerTally {
    task_seconds: BTreeMap<(String, u32), f64>,
    answers: u64,
    yes: u64,
    gold: u64,
    gold_yes: u64,
    enjoyment: Option<String>,
}

/// Per-worker statistics, updated one event at a time.
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    workers: BTreeMap<String, WorkerTally>,
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, e: &AnnotationEvent) {
        let t = self.workers.entry(e.worker.clone()).or_default();
        if e.gold {
            t.gold += 1;
            t.gold_yes += u64::from(e.gate);
            return;
        }
        *t.task_seconds.entry((e.video.clone(), e.iteration)).or_insert(0.0) += e.elapsed;
        t.answers += 1;
        t.yes += u64::from(e.gate);
    }

    pub fn set_enjoyment(&mut self, worker: &str, note: impl Into<String>) {
        self.workers.entry(worker.to_string()).or_default().enjoyment = Some(note.into());
    }

    /// One row per worker in id order; workers seen only on gold questions
    /// report zero tasks.
    pub fn stats(&self) -> Vec<WorkerStats> {
        self.workers
            .iter()
            .map(|(id, t)| {
                let secs: Vec<f64> = t.task_seconds.values().copied().collect();
                WorkerStats {
                    worker: id.clone(),
                    tasks: secs.len() as u64,
                    median_seconds: median(&secs).unwrap_or(0.0),
                    gold_recall: (t.gold > 0).then(|| t.gold_yes as f64 / t.gold as f64),
                    positive_rate: if t.answers > 0 { t.yes as f64 / t.answers as f64 } else { 0.0 },
                    enjoyment: t.enjoyment.clone(),
                }
            })
            .collect()
    }
}

/// Validated events with gold answers split out.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub events: Vec<AnnotationEvent>,
    pub gold: Vec<AnnotationEvent>,
    pub stats: Vec<WorkerStats>,
}

/// Checks one event against the taxonomy and the known videos. A yes on a
/// single-label question without a selection is completed with that label.
pub fn validate_event(
    tax: &Taxonomy,
    videos: Option<&HashSet<String>>,
    e: &mut AnnotationEvent,
) -> Result<()> {
    if let Some(known) = videos {
        if !known.contains(&e.video) {
            return Err(Error::Unknown {
                kind: "video",
                id: e.video.clone(),
            });
        }
    }
    let q = tax.question(e.question).ok_or_else(|| Error::Unknown {
        kind: "question",
        id: e.question.to_string(),
    })?;
    if let Some(stray) = e.members.iter().find(|l| !q.members.contains(l)) {
        return Err(Error::Taxonomy(format!("label {stray} is not a member of question {}", q.id)));
    }
    if e.gate && e.members.is_empty() {
        if q.is_singleton() {
            e.members = q.members.clone();
        } else if !e.gold {
            return Err(Error::Taxonomy(format!(
                "question {} answered yes without selecting a member",
                q.id
            )));
        }
    }
    e.members.sort_unstable();
    e.members.dedup();
    Ok(())
}

/// Reads an event CSV, validates each row and updates worker statistics.
/// Errors name the 1-based CSV line.
pub fn ingest(
    reader: impl Read,
    tax: &Taxonomy,
    videos: Option<&HashSet<String>>,
    acc: &mut StatsAccumulator,
) -> Result<Ingested> {
    let raw = read_events_csv(reader)?;
    let mut events = Vec::with_capacity(raw.len());
    let mut gold = Vec::new();
    for (i, mut e) in raw.into_iter().enumerate() {
        validate_event(tax, videos, &mut e).map_err(|err| Error::Row {
            line: i as u64 + 2,
            message: err.to_string(),
        })?;
        acc.add(&e);
        if e.gold {
            gold.push(e);
        } else {
            events.push(e);
        }
    }
    Ok(Ingested {
        events,
        gold,
        stats: acc.stats(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Writes `worker,tasks,median_seconds,gold_recall,positive_rate,enjoyment`.
pub fn write_worker_stats_csv(writer: impl Write, stats: &[WorkerStats]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["worker", "tasks", "median_seconds", "gold_recall", "positive_rate", "enjoyment"])?;
    for s in stats {
        w.write_record([
            s.worker.clone(),
            s.tasks.to_string(),
            format!("{:.6}", s.median_seconds),
            fmt_opt(s.gold_recall),
            format!("{:.6}", s.positive_rate),
            s.enjoyment.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<worker stats>", e))?;
    Ok(())
}

pub fn read_worker_stats_csv(reader: impl Read) -> Result<Vec<WorkerStats>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |field: &str| Error::Row {
            line,
            message: format!("bad {field}"),
        };
        if rec.len() < 5 {
            return Err(Error::Row {
                line,
                message: format!("expected at least 5 fields, found {}", rec.len()),
            });
        }
        let num = |i: usize, name: &str| rec[i].parse::<f64>().map_err(|_| bad(name));
        out.push(WorkerStats {
            worker: rec[0].to_string(),
            tasks: rec[1].parse().map_err(|_| bad("tasks"))?,
            median_seconds: num(2, "median_seconds")?,
            gold_recall: if rec[3].is_empty() { None } else { Some(num(3, "gold_recall")?) },
            positive_rate: num(4, "positive_rate")?,
            enjoyment: rec.get(5).filter(|s| !s.is_empty()).map(str::to_string),
        });
    }
    Ok(out)
}
