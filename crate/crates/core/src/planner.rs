//! Search over questions-per-task, iteration count and interface modifiers.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{IterationClock, TimeSource};
use crate::evaluate::analytic::mixture_union_recall;
use crate::workersim::{ModifierSet, Regime, WorkerBehavior};
use crate::{Error, Result};

/// Relative slack when comparing a plan's minutes against the budget.
const BUDGET_EPSILON: f64 = 1e-9;

/// How multi-iteration recall was predicted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RecallModel {
    Independent,
    Mixture {
        hard_fraction: f64,
        hard_recall_multiplier: f64,
    },
}

impl RecallModel {
    pub fn of(behavior: &WorkerBehavior) -> Self {
        if behavior.is_correlated() {
            RecallModel::Mixture {
                hard_fraction: behavior.hard_fraction,
                hard_recall_multiplier: behavior.hard_recall_multiplier,
            }
        } else {
            RecallModel::Independent
        }
    }

    pub fn union_recall(&self, r: f64, n: u32) -> f64 {
        match *self {
            RecallModel::Independent => mixture_union_recall(r, n, 0.0, 1.0),
            RecallModel::Mixture {
                hard_fraction,
                hard_recall_multiplier,
            } => mixture_union_recall(r, n, hard_fraction, hard_recall_multiplier),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub k: usize,
    pub n: u32,
    pub modifiers: ModifierSet,
    pub predicted_recall: f64,
    /// Absent when no positives are expected at all.
    pub predicted_precision: Option<f64>,
    pub minutes_per_video: f64,
    pub iteration_minutes: f64,
    pub time_source: TimeSource,
    pub recall_model: RecallModel,
    /// Single-iteration recall and false-positive rate after modifiers.
    pub iteration_recall: f64,
    pub iteration_fp_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConstraint {
    pub max_minutes_per_video: f64,
    #[serde(default)]
    pub min_precision: Option<f64>,
}

impl BudgetConstraint {
    pub fn new(max_minutes_per_video: f64, min_precision: Option<f64>) -> Result<Self> {
        if !(max_minutes_per_video > 0.0 && max_minutes_per_video.is_finite()) {
            return Err(Error::out_of_range("budget", max_minutes_per_video, "> 0 minutes"));
        }
        if let Some(p) = min_precision {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::out_of_range("min_precision", p, "[0, 1]"));
            }
        }
        Ok(Self {
            max_minutes_per_video,
            min_precision,
        })
    }

    fn admits_minutes(&self, minutes: f64) -> bool {
        minutes <= self.max_minutes_per_video * (1.0 + BUDGET_EPSILON)
    }

    fn admits_precision(&self, precision: Option<f64>) -> bool {
        match (self.min_precision, precision) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(floor), Some(p)) => p >= floor,
        }
    }
}

/// Plans that fit the budget, plus a notice when none does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub plans: Vec<Plan>,
    pub notice: Option<String>,
}

/// Modifier sets offered at interface size `k`: none, and the set found
/// beneficial in its regime when that is non-empty.
pub fn admissible_modifiers(k: usize) -> Vec<ModifierSet> {
    let rec = ModifierSet::recommended(Regime::of(k));
    if rec.is_empty() {
        vec![ModifierSet::NONE]
    } else {
        vec![ModifierSet::NONE, rec]
    }
}

/// Interface sizes with a direct measurement in `behavior`, within range.
pub fn default_k_values(behavior: &WorkerBehavior) -> Vec<usize> {
    let mut ks: Vec<usize> = behavior
        .anchors
        .iter()
        .map(|a| a.k)
        .filter(|k| *k >= 1 && *k <= behavior.stats.q_top)
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Per-video minutes of one iteration at `k` with `modifiers`.
pub fn iteration_minutes(
    behavior: &WorkerBehavior,
    clock: &IterationClock,
    k: usize,
    modifiers: ModifierSet,
) -> Result<(f64, TimeSource)> {
    let (base, source) = clock.iteration_minutes(k)?;
    let rates = behavior.apply_modifiers(modifiers, k);
    Ok((
        base * rates.time_ratio * behavior.speed_multiplier + rates.extra_seconds_per_iteration / 60.0,
        source,
    ))
}

/// Prediction for `n` iterations at `k` with `modifiers`, ignoring budgets.
pub fn predict(
    behavior: &WorkerBehavior,
    clock: &IterationClock,
    k: usize,
    n: u32,
    modifiers: ModifierSet,
) -> Result<Plan> {
    if n == 0 {
        return Err(Error::out_of_range("iterations", n, ">= 1"));
    }
    let (minutes, source) = iteration_minutes(behavior, clock, k, modifiers)?;
    let rates = behavior.apply_modifiers(modifiers, k);
    let model = RecallModel::of(behavior);
    let recall = model.union_recall(rates.recall, n);
    let g = behavior.stats.mean_positives;
    let q = behavior.stats.q_top as f64;
    let tp = g * recall;
    let fp = (q - g) * (1.0 - (1.0 - rates.fp_rate).powi(n as i32));
    Ok(Plan {
        k,
        n,
        modifiers,
        predicted_recall: recall,
        predicted_precision: (tp + fp > 0.0).then(|| tp / (tp + fp)),
        minutes_per_video: minutes * f64::from(n),
        iteration_minutes: minutes,
        time_source: source,
        recall_model: model,
        iteration_recall: rates.recall,
        iteration_fp_rate: rates.fp_rate,
    })
}

/// Every whole-iteration plan over `k_values`, admissible modifiers and
/// `1..=max_n` iterations that fits the time budget. The precision floor is
/// applied by [`optimize`], not here.
pub fn enumerate_plans(
    behavior: &WorkerBehavior,
    clock: &IterationClock,
    constraint: &BudgetConstraint,
    k_values: &[usize],
    max_n: u32,
) -> Result<Enumeration> {
    if k_values.is_empty() {
        return Err(Error::Infeasible("no interface sizes to consider".into()));
    }
    if max_n == 0 {
        return Err(Error::out_of_range("max_n", max_n, ">= 1"));
    }
    let q_top = behavior.stats.q_top;
    if let Some(&bad) = k_values.iter().find(|k| **k == 0 || **k > q_top) {
        return Err(Error::out_of_range("k", bad, format!("[1, {q_top}]")));
    }
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let grid: Vec<(usize, ModifierSet)> = ks
        .iter()
        .flat_map(|&k| admissible_modifiers(k).into_iter().map(move |m| (k, m)))
        .collect();
    let per_cell = grid
        .par_iter()
        .map(|&(k, m)| {
            let (minutes, _) = iteration_minutes(behavior, clock, k, m)?;
            let fit = (constraint.max_minutes_per_video * (1.0 + BUDGET_EPSILON) / minutes).floor();
            let n_max = if fit >= 1.0 { (fit.min(f64::from(max_n))) as u32 } else { 0 };
            (1..=n_max)
                .map(|n| predict(behavior, clock, k, n, m))
                .filter(|p| p.as_ref().map_or(true, |p| constraint.admits_minutes(p.minutes_per_video)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let plans: Vec<Plan> = per_cell.into_iter().flatten().collect();
    let notice = plans.is_empty().then(|| {
        format!(
            "budget of {} min/video is below every single-iteration time",
            constraint.max_minutes_per_video
        )
    });
    Ok(Enumeration { plans, notice })
}

/// Total preference order: higher recall, then fewer minutes, then higher
/// precision, then larger k. `Less` means `a` is preferred.
fn preference(a: &Plan, b: &Plan) -> std::cmp::Ordering {
    b.predicted_recall
        .total_cmp(&a.predicted_recall)
        .then(a.minutes_per_video.total_cmp(&b.minutes_per_video))
        .then(
            b.predicted_precision
                .unwrap_or(-1.0)
                .total_cmp(&a.predicted_precision.unwrap_or(-1.0)),
        )
        .then(b.k.cmp(&a.k))
        .then(a.n.cmp(&b.n))
        .then(a.modifiers.cmp(&b.modifiers))
}

/// Iteration cap used when none is given: as many as the cheapest
/// admissible iteration allows.
pub fn budget_iterations(
    behavior: &WorkerBehavior,
    clock: &IterationClock,
    constraint: &BudgetConstraint,
    k_values: &[usize],
) -> Result<u32> {
    let mut cheapest = f64::INFINITY;
    for &k in k_values {
        for m in admissible_modifiers(k) {
            cheapest = cheapest.min(iteration_minutes(behavior, clock, k, m)?.0);
        }
    }
    Ok((constraint.max_minutes_per_video / cheapest).floor().clamp(1.0, 100_000.0) as u32)
}

/// Best plan among `k_values` under the budget and precision floor.
pub fn optimize_over(
    behavior: &WorkerBehavior,
    clock: &IterationClock,
    constraint: &BudgetConstraint,
    k_values: &[usize],
) -> Result<Plan> {
    let max_n = budget_iterations(behavior, clock, constraint, k_values)?;
    let Enumeration { plans, notice } = enumerate_plans(behavior, clock, constraint, k_values, max_n)?;
    if let Some(notice) = notice {
        return Err(Error::Infeasible(notice));
    }
    plans
        .into_iter()
        .filter(|p| constraint.admits_precision(p.predicted_precision))
        .min_by(preference)
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no plan within {} min/video reaches precision {}",
                constraint.max_minutes_per_video,
                constraint.min_precision.unwrap_or(0.0)
            ))
        })
}

/// Best plan over the interface sizes measured in `behavior`.
pub fn optimize(behavior: &WorkerBehavior, clock: &IterationClock, constraint: &BudgetConstraint) -> Result<Plan> {
    optimize_over(behavior, clock, constraint, &default_k_values(behavior))
}

/// Recall gained per minute by iteration `n + 1`.
pub fn marginal_gain(model: RecallModel, r: f64, n: u32, iteration_minutes: f64) -> f64 {
    (model.union_recall(r, n + 1) - model.union_recall(r, n)) / iteration_minutes
}

/// Recall gained per minute by one more iteration of `plan`.
pub fn marginal_value(plan: &Plan) -> f64 {
    marginal_gain(plan.recall_model, plan.iteration_recall, plan.n, plan.iteration_minutes)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Writes `k,n,modifiers,recall,precision,minutes`.
pub fn write_plans_csv(writer: impl Write, plans: &[Plan]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["k", "n", "modifiers", "recall", "precision", "minutes"])?;
    for p in plans {
        w.write_record([
            p.k.to_string(),
            p.n.to_string(),
            p.modifiers.to_string(),
            format!("{:.6}", p.predicted_recall),
            fmt_opt(p.predicted_precision),
            format!("{:.6}", p.minutes_per_video),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<plans>", e))?;
    Ok(())
}
