//! Aggregation of answers into label matrices and quality measurement.

pub mod analytic;
mod matrix;
mod metrics;
pub mod stats;
mod temporal;

pub use analytic::{analytic_union, expected_recall, UnionPrediction};
pub use matrix::{aggregate, BinaryLabels, LabelMatrix};
pub use metrics::{
    binomial_se, metrics, per_label_recall, recall_vs_duration, timing_summary, write_metrics_csv,
    Counts, MetricsRow, Metrics, TimingSummary,
};
pub use temporal::{
    agreement_rate, read_segments_jsonl, temporal_iou, write_segments_jsonl, AgreementNorm,
    SegmentKey, SegmentSet, TemporalSegment,
};
