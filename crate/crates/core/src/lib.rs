//! Campaign engine for exhaustive multi-label annotation of temporal media.
//!
//! The crate covers the full loop of a crowd annotation campaign over a set of
//! videos and a hierarchical label space:
//!
//! - [`taxonomy`]: labels, gate questions and question partitioning.
//! - [`costmodel`]: the linear task-time model, HIT packing and cost totals.
//! - [`workersim`]: a calibrated stochastic annotator model.
//! - [`evaluate`]: vote aggregation, precision/recall, closed-form
//!   expectations and temporal agreement.
//! - [`planner`]: search over questions-per-task, iteration count and
//!   interface modifiers under a time budget.
//! - [`campaign`]: HIT generation, ingestion, quality control, verification
//!   queues and experiment reproduction.
//!
//! All randomness is derived from explicit 64-bit seeds through
//! [`seed::stream_seed`], so results do not depend on scheduling.

pub mod campaign;
pub mod config;
pub mod costmodel;
mod error;
pub mod evaluate;
pub mod planner;
pub mod seed;
pub mod taxonomy;
pub mod workersim;

pub use error::{Error, Result};
