use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::taxonomy::LabelId;
use crate::{Error, Result};

/// A time interval in seconds with `0 <= start < end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct TemporalSegment {
    start: f64,
    end: f64,
}

impl TemporalSegment {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start >= 0.0 && start < end && end.is_finite()) {
            return Err(Error::out_of_range(
                "segment",
                format!("[{start}, {end}]"),
                "0 <= start < end",
            ));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

impl TryFrom<[f64; 2]> for TemporalSegment {
    type Error = Error;

    fn try_from([s, e]: [f64; 2]) -> Result<Self> {
        Self::new(s, e)
    }
}

impl From<TemporalSegment> for [f64; 2] {
    fn from(s: TemporalSegment) -> Self {
        [s.start, s.end]
    }
}

pub fn temporal_iou(a: &TemporalSegment, b: &TemporalSegment) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.end.max(b.end) - a.start.min(b.start);
    // union is the hull here; correct it when the intervals are disjoint
    let union = if inter > 0.0 { union } else { a.length() + b.length() };
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentKey {
    pub video: String,
    pub label: LabelId,
}

pub type SegmentSet = BTreeMap<SegmentKey, Vec<TemporalSegment>>;

/// Denominator for per-key agreement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgreementNorm {
    #[default]
    Max,
    Min,
}

fn matched_pairs(a: &[TemporalSegment], b: &[TemporalSegment], threshold: f64) -> usize {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            let iou = temporal_iou(x, y);
            if iou >= threshold && iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    pairs.sort_by(|p, q| q.0.total_cmp(&p.0).then((p.1, p.2).cmp(&(q.1, q.2))));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            matched += 1;
        }
    }
    matched
}

/// Mean over keys of greedily matched pairs (descending IoU, at least
/// `threshold`) divided by the larger (or smaller) segment count. Keys with
/// no segments on either side are skipped; `None` when nothing is left.
pub fn agreement_rate(
    a: &SegmentSet,
    b: &SegmentSet,
    threshold: f64,
    norm: AgreementNorm,
) -> Option<f64> {
    let empty = Vec::new();
    let mut keys: Vec<&SegmentKey> = a.keys().chain(b.keys()).collect();
    keys.sort_unstable();
    keys.dedup();
    let (mut total, mut count) = (0.0, 0usize);
    for key in keys {
        let sa = a.get(key).unwrap_or(&empty);
        let sb = b.get(key).unwrap_or(&empty);
        let denom = match norm {
            AgreementNorm::Max => sa.len().max(sb.len()),
            AgreementNorm::Min => sa.len().min(sb.len()),
        };
        if sa.is_empty() && sb.is_empty() {
            continue;
        }
        count += 1;
        if denom > 0 {
            total += matched_pairs(sa, sb, threshold) as f64 / denom as f64;
        }
    }
    (count > 0).then(|| total / count as f64)
}

#[derive(Serialize, Deserialize)]
struct SegmentRow {
    video: String,
    label: LabelId,
    segments: Vec<TemporalSegment>,
}

pub fn read_segments_jsonl(reader: impl BufRead) -> Result<SegmentSet> {
    let mut out = SegmentSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let bad = |message: String| Error::Row { line: line_no, message };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: SegmentRow = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        out.entry(SegmentKey {
            video: row.video,
            label: row.label,
        })
        .or_default()
        .extend(row.segments);
    }
    Ok(out)
}

pub fn write_segments_jsonl(mut writer: impl Write, set: &SegmentSet) -> Result<()> {
    for (key, segments) in set {
        let row = SegmentRow {
            video: key.video.clone(),
            label: key.label,
            segments: segments.clone(),
        };
        serde_json::to_writer(&mut writer, &row)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<segments>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(s: f64, e: f64) -> TemporalSegment {
        TemporalSegment::new(s, e).unwrap()
    }

    fn key(v: &str, l: u32) -> SegmentKey {
        SegmentKey {
            video: v.into(),
            label: LabelId(l),
        }
    }

    #[test]
    fn iou_cases() {
        assert_eq!(temporal_iou(&seg(1.0, 4.0), &seg(1.0, 4.0)), 1.0);
        assert_eq!(temporal_iou(&seg(0.0, 1.0), &seg(2.0, 3.0)), 0.0);
        assert_eq!(temporal_iou(&seg(0.0, 1.0), &seg(1.0, 3.0)), 0.0);
        assert_eq!(temporal_iou(&seg(0.0, 10.0), &seg(5.0, 15.0)), 1.0 / 3.0);
        assert!(TemporalSegment::new(3.0, 3.0).is_err());
        assert!(TemporalSegment::new(-1.0, 3.0).is_err());
    }

    #[test]
    fn agreement_cases() {
        let mut a = SegmentSet::new();
        a.insert(key("v", 1), vec![seg(0.0, 10.0), seg(20.0, 30.0)]);
        a.insert(key("w", 2), vec![seg(5.0, 6.0)]);
        assert_eq!(agreement_rate(&a, &a, 0.1, AgreementNorm::Max), Some(1.0));

        let shifted: SegmentSet = a
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().map(|s| seg(s.start() + 100.0, s.end() + 100.0)).collect()))
            .collect();
        assert_eq!(agreement_rate(&a, &shifted, 0.1, AgreementNorm::Max), Some(0.0));

        // one pair at IoU 0.5, the other at 0.05
        let mut x = SegmentSet::new();
        x.insert(key("v", 1), vec![seg(0.0, 10.0), seg(20.0, 30.0)]);
        let mut y = SegmentSet::new();
        y.insert(key("v", 1), vec![seg(0.0, 5.0), seg(29.5, 39.5)]);
        let iou = temporal_iou(&seg(20.0, 30.0), &seg(29.5, 39.5));
        assert!((iou - 0.5 / 19.5).abs() < 1e-12 && iou < 0.1);
        assert_eq!(agreement_rate(&x, &y, 0.1, AgreementNorm::Max), Some(0.5));

        let mut z = SegmentSet::new();
        z.insert(key("v", 1), vec![seg(0.0, 10.0)]);
        assert_eq!(agreement_rate(&x, &z, 0.1, AgreementNorm::Max), Some(0.5));
        assert_eq!(agreement_rate(&x, &z, 0.1, AgreementNorm::Min), Some(1.0));
        assert_eq!(agreement_rate(&SegmentSet::new(), &SegmentSet::new(), 0.1, AgreementNorm::Max), None);
    }

    #[test]
    fn greedy_takes_best_pair_first() {
        let mut a = SegmentSet::new();
        a.insert(key("v", 0), vec![seg(0.0, 10.0)]);
        let mut b = SegmentSet::new();
        b.insert(key("v", 0), vec![seg(1.0, 10.0), seg(0.0, 10.0)]);
        assert_eq!(matched_pairs(&a[&key("v", 0)], &b[&key("v", 0)], 0.1), 1);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut a = SegmentSet::new();
        a.insert(key("v1", 3), vec![seg(2.0, 11.5)]);
        a.insert(key("v0", 7), vec![seg(0.0, 1.0), seg(4.0, 5.5)]);
        let mut buf = Vec::new();
        write_segments_jsonl(&mut buf, &a).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(r#"{"video":"v0","label":7,"segments":[[0.0,1.0],[4.0,5.5]]}"#));
        assert_eq!(read_segments_jsonl(text.as_bytes()).unwrap(), a);
        let bad = r#"{"video":"v","label":1,"segments":[[5.0,2.0]]}"#;
        assert!(matches!(read_segments_jsonl(bad.as_bytes()), Err(Error::Row { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded_scale_invariant(
            s1 in 0.0f64..100.0, l1 in 0.01f64..50.0,
            s2 in 0.0f64..100.0, l2 in 0.01f64..50.0,
            c in 0.01f64..100.0,
        ) {
            let (a, b) = (seg(s1, s1 + l1), seg(s2, s2 + l2));
            let iou = temporal_iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&iou));
            prop_assert_eq!(iou, temporal_iou(&b, &a));
            let scaled = temporal_iou(&seg(s1 * c, (s1 + l1) * c), &seg(s2 * c, (s2 + l2) * c));
            prop_assert!((iou - scaled).abs() < 1e-9);
        }
    }
}
