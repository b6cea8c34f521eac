use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::taxonomy::{LabelId, Taxonomy};
use crate::{seed, Error, Result};

/// Ground truth for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTruth {
    pub video: String,
    pub duration: f64,
    pub labels: Vec<LabelId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub segments: BTreeMap<LabelId, Vec<[f64; 2]>>,
}

impl VideoTruth {
    pub fn new(video: impl Into<String>, duration: f64, mut labels: Vec<LabelId>) -> Self {
        labels.sort_unstable();
        labels.dedup();
        Self {
            video: video.into(),
            duration,
            labels,
            segments: BTreeMap::new(),
        }
    }

    pub fn has_label(&self, label: LabelId) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn validate(&self, tax: &Taxonomy) -> Result<()> {
        if self.video.is_empty() {
            return Err(Error::Parse {
                what: "video truth",
                message: "empty video id".into(),
            });
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::out_of_range("duration", self.duration, "> 0"));
        }
        for &l in &self.labels {
            if tax.label(l).is_none() {
                return Err(Error::Unknown {
                    kind: "label",
                    id: l.to_string(),
                });
            }
        }
        for (label, segs) in &self.segments {
            if !self.has_label(*label) {
                return Err(Error::Parse {
                    what: "video truth",
                    message: format!("video {}: segments for non-positive label {label}", self.video),
                });
            }
            for &[s, e] in segs {
                if !(0.0 <= s && s < e && e <= self.duration) {
                    return Err(Error::Parse {
                        what: "video truth",
                        message: format!(
                            "video {}: segment [{s}, {e}] outside [0, {}]",
                            self.video, self.duration
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Reads one JSON object per non-empty line and validates each.
pub fn read_truth_jsonl(reader: impl BufRead, tax: &Taxonomy) -> Result<Vec<VideoTruth>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::Row {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut v: VideoTruth = serde_json::from_str(&line).map_err(|e| Error::Row {
            line: line_no,
            message: e.to_string(),
        })?;
        v.labels.sort_unstable();
        v.labels.dedup();
        v.validate(tax).map_err(|e| Error::Row {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(v.video.clone()) {
            return Err(Error::Row {
                line: line_no,
                message: format!("duplicate video id {}", v.video),
            });
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_truth_jsonl(mut writer: impl Write, truths: &[VideoTruth]) -> Result<()> {
    for t in truths {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<truth>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Mean positive questions per video (one label per positive question).
    pub mean_positives: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        // uniform lengths with mean 30.1 s
        Self {
            mean_positives: 3.7,
            min_seconds: 2.0,
            max_seconds: 58.2,
        }
    }
}

/// Synthetic ground truth.
///
/// Each video gets `1 + Poisson(mean - 1)` positive questions (capped at the
/// question count), chosen uniformly without replacement, with one positive
/// member label each and one temporal segment per positive label.
pub fn synthesize_truth(
    tax: &Taxonomy,
    count: usize,
    opts: &SynthOptions,
    master_seed: u64,
) -> Result<Vec<VideoTruth>> {
    let q_top = tax.question_count();
    if !(opts.mean_positives >= 1.0 && opts.mean_positives <= q_top as f64) {
        return Err(Error::out_of_range(
            "mean_positives",
            opts.mean_positives,
            format!("[1, {q_top}]"),
        ));
    }
    if !(opts.min_seconds > 0.0 && opts.max_seconds >= opts.min_seconds) {
        return Err(Error::out_of_range(
            "video length range",
            format!("[{}, {}]", opts.min_seconds, opts.max_seconds),
            "0 < min <= max",
        ));
    }
    let extra = Poisson::new(opts.mean_positives - 1.0).ok();
    let width = (count.max(1) - 1).to_string().len();
    Ok((0..count)
        .map(|i| {
            let mut rng = seed::rng(seed::stream_seed(master_seed, &[0x5452_5554, i as u64]));
            let duration = if opts.max_seconds > opts.min_seconds {
                rng.random_range(opts.min_seconds..opts.max_seconds)
            } else {
                opts.min_seconds
            };
            let extra_count = extra.map_or(0, |p| p.sample(&mut rng) as usize);
            let positives = (1 + extra_count).min(q_top);
            let mut labels = Vec::with_capacity(positives);
            let mut segments = BTreeMap::new();
            for q in index::sample(&mut rng, q_top, positives) {
                let members = &tax.questions()[q].members;
                let label = members[rng.random_range(0..members.len())];
                let len = duration * rng.random_range(0.1..0.9);
                let start = rng.random_range(0.0..=(duration - len));
                segments.insert(label, vec![[start, (start + len).min(duration)]]);
                labels.push(label);
            }
            let mut v = VideoTruth::new(format!("v{i:0width$}"), duration, labels);
            v.segments = segments;
            v
        })
        .collect())
}
