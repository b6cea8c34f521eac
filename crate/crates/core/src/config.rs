//! JSON campaign configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::costmodel::{HitBudget, IterationClock, TimeModel};
use crate::planner::BudgetConstraint;
use crate::taxonomy::Taxonomy;
use crate::workersim::{calibrate, AccuracyAnchor, ModifierSet, TruthStats, WorkerBehavior, REFERENCE_UNION_RECALL};
use crate::{Error, Result};

/// Every field is optional in the file; missing ones take the reference
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Taxonomy JSON; relative paths resolve against the config file. The
    /// bundled sample is used when absent.
    pub taxonomy: Option<PathBuf>,
    pub time_model: TimeModel,
    pub anchors: Vec<AccuracyAnchor>,
    /// Expected positive questions per video.
    pub mean_positives: f64,
    /// `(iterations, union recall)` points of the largest anchor used to fit
    /// the difficulty mixture; empty means independent iterations.
    pub union_recall_targets: Vec<(u32, f64)>,
    pub budget: HitBudget,
    pub modifiers: ModifierSet,
    pub max_minutes_per_video: f64,
    pub min_precision: Option<f64>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            taxonomy: None,
            time_model: TimeModel::default(),
            anchors: AccuracyAnchor::reference(),
            mean_positives: TruthStats::default().mean_positives,
            union_recall_targets: REFERENCE_UNION_RECALL.to_vec(),
            budget: HitBudget::default(),
            modifiers: ModifierSet::NONE,
            max_minutes_per_video: 7.1,
            min_precision: None,
        }
    }
}

impl Config {
    pub fn from_json(source: &str) -> Result<Self> {
        serde_json::from_str(source).map_err(|e| Error::Parse {
            what: "config",
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(tax), Some(dir)) = (&cfg.taxonomy, path.parent()) {
            if tax.is_relative() {
                cfg.taxonomy = Some(dir.join(tax));
            }
        }
        Ok(cfg)
    }

    pub fn taxonomy(&self) -> Result<Taxonomy> {
        match &self.taxonomy {
            Some(path) => Taxonomy::load(path),
            None => Ok(Taxonomy::sample()),
        }
    }

    pub fn behavior(&self, q_top: usize) -> Result<WorkerBehavior> {
        let stats = TruthStats {
            mean_positives: self.mean_positives,
            q_top,
        };
        let b = calibrate(&self.anchors, stats)?;
        if self.union_recall_targets.is_empty() {
            return Ok(b);
        }
        let k = self.anchors.iter().map(|a| a.k).max().unwrap_or(q_top);
        b.fit_mixture(k, &self.union_recall_targets)
    }

    pub fn clock(&self, behavior: &WorkerBehavior) -> IterationClock {
        IterationClock::with_observed(self.time_model, behavior.stats.q_top, behavior.observed_iterations())
    }

    pub fn constraint(&self) -> Result<BudgetConstraint> {
        BudgetConstraint::new(self.max_minutes_per_video, self.min_precision)
    }
}
