//! HIT generation, ingestion, quality control, verification and experiment
//! reproduction.

mod blacklist;
mod hits;
mod ingest;
mod qc;
mod reproduce;
mod simulate;
mod verify;

pub use blacklist::{Blacklist, BlacklistEntry};
pub use hits::{
    duplicates_per_question, known_positive_questions, pack_hits, write_hits_jsonl, HitSpec, HitVideo,
    PackOptions, TARGET_POSITIVE_FRACTION,
};
pub use ingest::{
    ingest, read_worker_stats_csv, validate_event, write_worker_stats_csv, Ingested, StatsAccumulator,
    WorkerStats,
};
pub use qc::{qc_flag, QcFlag, QcThresholds, Signal};
pub use reproduce::{reproduce, run_experiment, write_atomic, Experiment, ExperimentSettings};
pub use simulate::{qc_trial, simulate_campaign, QcTrial};
pub use verify::{build_verification_queue, write_verification_jsonl, VerificationResponse, VerificationTask};
