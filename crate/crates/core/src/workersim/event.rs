use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::taxonomy::{LabelId, QuestionId};
use crate::{Error, Result};

/// One answer to one top-level question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub worker: String,
    pub video: String,
    pub question: QuestionId,
    pub gate: bool,
    pub members: Vec<LabelId>,
    pub elapsed: f64,
    pub iteration: u32,
    /// Injected duplicate of a known-positive question.
    #[serde(default)]
    pub gold: bool,
}

const HEADER: [&str; 7] = ["worker", "video", "question", "gate", "members", "elapsed", "iteration"];

/// Writes events as CSV. A trailing `gold` column is emitted only when some
/// event is a gold duplicate.
pub fn write_events_csv(writer: impl Write, events: &[AnnotationEvent]) -> Result<()> {
    let with_gold = events.iter().any(|e| e.gold);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    if with_gold {
        let mut h = HEADER.to_vec();
        h.push("gold");
        w.write_record(&h)?;
    } else {
        w.write_record(HEADER)?;
    }
    let mut record = Vec::with_capacity(8);
    for e in events {
        record.clear();
        record.push(e.worker.clone());
        record.push(e.video.clone());
        record.push(e.question.to_string());
        record.push(if e.gate { "1" } else { "0" }.to_string());
        record.push(
            e.members
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        );
        record.push(e.elapsed.to_string());
        record.push(e.iteration.to_string());
        if with_gold {
            record.push(if e.gold { "1" } else { "0" }.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<events>", e))?;
    Ok(())
}

fn parse_bool(field: &str) -> Option<bool> {
    match field {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// Parses the event CSV, reporting the 1-based line of the first bad row.
/// Structural checks only; taxonomy consistency is checked on ingest.
pub fn read_events_csv(reader: impl Read) -> Result<Vec<AnnotationEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let with_gold = match headers.len() {
        7 => false,
        8 if &headers[7] == "gold" => true,
        _ => {
            return Err(Error::Row {
                line: 1,
                message: format!("expected header {}[,gold]", HEADER.join(",")),
            })
        }
    };
    if headers.iter().take(7).ne(HEADER.iter().copied()) {
        return Err(Error::Row {
            line: 1,
            message: format!("expected header {}[,gold]", HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Row { line, message };
        if rec.len() != headers.len() {
            return Err(bad(format!("expected {} fields, found {}", headers.len(), rec.len())));
        }
        let question = rec[2]
            .parse::<u32>()
            .map_err(|_| bad(format!("bad question id `{}`", &rec[2])))?;
        let gate = parse_bool(&rec[3]).ok_or_else(|| bad(format!("bad gate `{}`", &rec[3])))?;
        let members = if rec[4].is_empty() {
            Vec::new()
        } else {
            rec[4]
                .split(';')
                .map(|m| m.trim().parse::<u32>().map(LabelId))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("bad members `{}`", &rec[4])))?
        };
        let elapsed = rec[5]
            .parse::<f64>()
            .ok()
            .filter(|e| *e > 0.0 && e.is_finite())
            .ok_or_else(|| bad(format!("elapsed must be a positive number, got `{}`", &rec[5])))?;
        let iteration = rec[6]
            .parse::<u32>()
            .map_err(|_| bad(format!("bad iteration `{}`", &rec[6])))?;
        let gold = if with_gold {
            parse_bool(&rec[7]).ok_or_else(|| bad(format!("bad gold flag `{}`", &rec[7])))?
        } else {
            false
        };
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(bad("empty worker or video id".into()));
        }
        if !gate && !members.is_empty() {
            return Err(bad("members selected on a negative gate".into()));
        }
        out.push(AnnotationEvent {
            worker: rec[0].to_string(),
            video: rec[1].to_string(),
            question: QuestionId(question),
            gate,
            members,
            elapsed,
            iteration,
            gold,
        });
    }
    Ok(out)
}
