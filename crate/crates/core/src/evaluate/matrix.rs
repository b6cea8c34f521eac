use std::collections::HashMap;
use std::io::{Read, Write};

use crate::taxonomy::{LabelId, Taxonomy};
use crate::workersim::{AnnotationEvent, VideoTruth};
use crate::{Error, Result};

/// Per-(video, label) count of iterations in which the label was selected.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    videos: Vec<String>,
    n_labels: usize,
    votes: Vec<u32>,
    iterations: u32,
}

impl LabelMatrix {
    /// Counts votes from non-gold events. Every question must be answered for
    /// every video in every iteration from 0 up to the highest one seen.
    pub fn from_events<'e>(
        tax: &Taxonomy,
        videos: &[String],
        events: impl IntoIterator<Item = &'e AnnotationEvent>,
    ) -> Result<Self> {
        let index = video_index(videos)?;
        let m = videos.len();
        let q = tax.question_count();
        let n = tax.label_count();

        let mut answered: Vec<bool> = Vec::new();
        let mut marks: Vec<(usize, u32, u32)> = Vec::new();
        let mut iterations = 0u32;
        for e in events {
            if e.gold {
                continue;
            }
            let &v = index.get(e.video.as_str()).ok_or_else(|| Error::Unknown {
                kind: "video",
                id: e.video.clone(),
            })?;
            let question = tax.question(e.question).ok_or_else(|| Error::Unknown {
                kind: "question",
                id: e.question.to_string(),
            })?;
            if let Some(stray) = e.members.iter().find(|l| !question.members.contains(l)) {
                return Err(Error::Taxonomy(format!(
                    "label {stray} is not a member of question {}",
                    e.question
                )));
            }
            if e.iteration >= iterations {
                iterations = e.iteration + 1;
                answered.resize(iterations as usize * m * q, false);
            }
            answered[(e.iteration as usize * m + v) * q + e.question.0 as usize] = true;
            if e.gate {
                marks.extend(e.members.iter().map(|l| (v, l.0, e.iteration)));
            }
        }
        if iterations == 0 {
            return Err(Error::IncompleteIteration {
                gaps: vec!["no answers recorded".into()],
            });
        }

        let gaps: Vec<String> = answered
            .iter()
            .enumerate()
            .filter(|(_, ok)| !**ok)
            .map(|(i, _)| {
                let (it, rest) = (i / (m * q), i % (m * q));
                format!("video={} question={} iteration={it}", videos[rest / q], rest % q)
            })
            .collect();
        if !gaps.is_empty() {
            return Err(Error::IncompleteIteration { gaps });
        }

        marks.sort_unstable();
        marks.dedup();
        let mut votes = vec![0u32; m * n];
        for (v, l, _) in marks {
            votes[v * n + l as usize] += 1;
        }
        Ok(Self {
            videos: videos.to_vec(),
            n_labels: n,
            votes,
            iterations,
        })
    }

    pub fn videos(&self) -> &[String] {
        &self.videos
    }

    pub fn label_count(&self) -> usize {
        self.n_labels
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn votes(&self, video: usize, label: LabelId) -> u32 {
        self.votes[video * self.n_labels + label.0 as usize]
    }

    /// Positive iff at least `threshold` iterations selected the label.
    pub fn threshold(&self, threshold: u32) -> BinaryLabels {
        let threshold = threshold.max(1);
        BinaryLabels {
            index: self.videos.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect(),
            videos: self.videos.clone(),
            n_labels: self.n_labels,
            bits: self.votes.iter().map(|&c| c >= threshold).collect(),
        }
    }
}

fn video_index(videos: &[String]) -> Result<HashMap<&str, usize>> {
    let mut index = HashMap::with_capacity(videos.len());
    for (i, v) in videos.iter().enumerate() {
        if index.insert(v.as_str(), i).is_some() {
            return Err(Error::Parse {
                what: "video list",
                message: format!("duplicate video id {v}"),
            });
        }
    }
    Ok(index)
}

/// Aggregates events into binary labels; the default threshold of 1 is the
/// union rule.
pub fn aggregate(
    tax: &Taxonomy,
    videos: &[String],
    events: &[AnnotationEvent],
    threshold: u32,
) -> Result<BinaryLabels> {
    if threshold == 0 {
        return Err(Error::out_of_range("threshold", threshold, ">= 1"));
    }
    Ok(LabelMatrix::from_events(tax, videos, events)?.threshold(threshold))
}

/// M x N presence/absence grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryLabels {
    videos: Vec<String>,
    index: HashMap<String, usize>,
    n_labels: usize,
    bits: Vec<bool>,
}

impl BinaryLabels {
    pub fn empty(videos: &[String], n_labels: usize) -> Result<Self> {
        let index = video_index(videos)?
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Ok(Self {
            videos: videos.to_vec(),
            index,
            n_labels,
            bits: vec![false; videos.len() * n_labels],
        })
    }

    pub fn from_truth(truths: &[VideoTruth], n_labels: usize) -> Result<Self> {
        let videos: Vec<String> = truths.iter().map(|t| t.video.clone()).collect();
        let mut out = Self::empty(&videos, n_labels)?;
        for (v, t) in truths.iter().enumerate() {
            for &l in &t.labels {
                out.set(v, l, true)?;
            }
        }
        Ok(out)
    }

    pub fn videos(&self) -> &[String] {
        &self.videos
    }

    pub fn video_count(&self) -> usize {
        self.videos.len()
    }

    pub fn label_count(&self) -> usize {
        self.n_labels
    }

    pub fn video_index(&self, video: &str) -> Option<usize> {
        self.index.get(video).copied()
    }

    pub fn get(&self, video: usize, label: LabelId) -> bool {
        self.bits[video * self.n_labels + label.0 as usize]
    }

    pub fn set(&mut self, video: usize, label: LabelId, value: bool) -> Result<()> {
        if video >= self.videos.len() || label.0 as usize >= self.n_labels {
            return Err(Error::Shape(format!(
                "({video}, {label}) outside {}x{}",
                self.videos.len(),
                self.n_labels
            )));
        }
        self.bits[video * self.n_labels + label.0 as usize] = value;
        Ok(())
    }

    pub fn positives(&self, video: usize) -> impl Iterator<Item = LabelId> + '_ {
        let row = &self.bits[video * self.n_labels..(video + 1) * self.n_labels];
        row.iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(|(l, _)| LabelId(l as u32))
    }

    pub fn positive_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// `video,label` rows, one per positive.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["video", "label"])?;
        for (v, name) in self.videos.iter().enumerate() {
            for l in self.positives(v) {
                w.write_record([name.as_str(), &l.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<labels>", e))?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read, videos: &[String], n_labels: usize) -> Result<Self> {
        let mut out = Self::empty(videos, n_labels)?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |message: String| Error::Row { line, message };
            if rec.len() != 2 {
                return Err(bad("expected video,label".into()));
            }
            let v = out
                .video_index(&rec[0])
                .ok_or_else(|| bad(format!("unknown video `{}`", &rec[0])))?;
            let l = rec[1]
                .parse::<u32>()
                .map_err(|_| bad(format!("bad label `{}`", &rec[1])))?;
            out.set(v, LabelId(l), true).map_err(|e| bad(e.to_string()))?;
        }
        Ok(out)
    }
}
