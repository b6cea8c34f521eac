//! Stochastic crowd-worker model.
//!
//! A [`WorkerBehavior`] holds per-interface-size recall and false-positive
//! curves calibrated from measured (recall, precision) anchors, plus an
//! optional two-component difficulty mixture that makes some
//! (video, label) pairs hard for every worker. The [`Simulator`] turns a
//! behavior, a ground-truth video and a question list into
//! [`AnnotationEvent`]s.

mod behavior;
mod event;
mod sim;
mod truth;

pub use behavior::{
    calibrate, AccuracyAnchor, AdjustedRates, Adjustment, Modifier, ModifierSet, Regime,
    TruthStats, WorkerBehavior, FEW_QUESTION_MAX_K, REFERENCE_UNION_RECALL,
};
pub use event::{read_events_csv, write_events_csv, AnnotationEvent};
pub use sim::{
    is_hard_pair, sample_worker_pool, task_seed, Simulator, TaskQuestion, Worker, WorkerKind,
    TIME_SIGMA,
};
pub use truth::{read_truth_jsonl, synthesize_truth, write_truth_jsonl, SynthOptions, VideoTruth};
