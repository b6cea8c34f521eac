use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::evaluate::{BinaryLabels, TemporalSegment};
use crate::taxonomy::LabelId;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationResponse {
    Segment(TemporalSegment),
    NotPresent,
}

/// A candidate positive awaiting a temporal extent or a rejection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationTask {
    pub video: String,
    pub label: LabelId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<VerificationResponse>,
}

impl VerificationTask {
    /// Records a response, rejecting segments past the video's end.
    pub fn respond(&mut self, response: VerificationResponse, duration: f64) -> Result<()> {
        if let VerificationResponse::Segment(s) = response {
            if s.end() > duration {
                return Err(Error::out_of_range(
                    "segment end",
                    s.end(),
                    format!("<= video duration {duration}"),
                ));
            }
        }
        self.response = Some(response);
        Ok(())
    }
}

/// One task per predicted positive not yet verified, in video then label
/// order.
pub fn build_verification_queue(
    labels: &BinaryLabels,
    already_verified: &BTreeSet<(String, LabelId)>,
) -> Vec<VerificationTask> {
    let mut out = Vec::new();
    for (v, video) in labels.videos().iter().enumerate() {
        for label in labels.positives(v) {
            if !already_verified.contains(&(video.clone(), label)) {
                out.push(VerificationTask {
                    video: video.clone(),
                    label,
                    response: None,
                });
            }
        }
    }
    out
}

pub fn write_verification_jsonl(mut writer: impl Write, tasks: &[VerificationTask]) -> Result<()> {
    for t in tasks {
        serde_json::to_writer(&mut writer, t)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<verification>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_lifecycle() {
        let videos: Vec<String> = (0..3).map(|i| format!("v{i}")).collect();
        let mut labels = BinaryLabels::empty(&videos, 10).unwrap();
        assert!(build_verification_queue(&labels, &BTreeSet::new()).is_empty());
        labels.set(0, LabelId(2), true).unwrap();
        labels.set(2, LabelId(2), true).unwrap();
        labels.set(2, LabelId(9), true).unwrap();
        let q = build_verification_queue(&labels, &BTreeSet::new());
        assert_eq!(q.len(), 3);
        let done: BTreeSet<_> = q.iter().map(|t| (t.video.clone(), t.label)).collect();
        assert!(build_verification_queue(&labels, &done).is_empty());
    }

    #[test]
    fn scale_check() {
        // 9 labels per video over 1,815 videos
        let videos: Vec<String> = (0..1815).map(|i| format!("v{i}")).collect();
        let mut labels = BinaryLabels::empty(&videos, 157).unwrap();
        for v in 0..1815 {
            for l in 0..9 {
                labels.set(v, LabelId((v as u32 + l * 17) % 157), true).unwrap();
            }
        }
        assert_eq!(build_verification_queue(&labels, &BTreeSet::new()).len(), 16_335);
    }

    #[test]
    fn responses_stay_inside_the_video() {
        let mut t = VerificationTask {
            video: "v".into(),
            label: LabelId(1),
            response: None,
        };
        let late = TemporalSegment::new(5.0, 40.0).unwrap();
        assert!(t.respond(VerificationResponse::Segment(late), 30.0).is_err());
        t.respond(VerificationResponse::Segment(TemporalSegment::new(5.0, 20.0).unwrap()), 30.0).unwrap();
        t.respond(VerificationResponse::NotPresent, 30.0).unwrap();
        let mut buf = Vec::new();
        write_verification_jsonl(&mut buf, &[t]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "{\"video\":\"v\",\"label\":1,\"response\":\"not_present\"}\n");
    }
}
