use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnnotationEvent, ModifierSet, VideoTruth, WorkerBehavior};
use crate::costmodel::{IterationClock, TimeModel};
use crate::taxonomy::{LabelId, QuestionId, SubsetPlan, Taxonomy};
use crate::{seed, Error, Result};

/// Log-scale spread of per-task completion time.
pub const TIME_SIGMA: f64 = 0.25;

const SPAMMER_GATE_RATE: f64 = 0.5;
const SPAMMER_TIME_FACTOR: f64 = 0.2;
const HONEST_RECALL_JITTER: f64 = 0.10;

const HARD_SALT: u64 = 0x4841_5244;
const DECOY_SALT: u64 = 0x4445_434f;
const TASK_SALT: u64 = 0x5441_534b;
const ORDER_SALT: u64 = 0x4f52_4452;
const ASSIGN_SALT: u64 = 0x4153_4e47;
const POOL_SALT: u64 = 0x504f_4f4c;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkerKind {
    Honest { recall_scale: f64 },
    /// Answers gates at random, fast.
    Spammer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Worker {
    pub id: String,
    #[serde(flatten)]
    pub kind: WorkerKind,
}

impl Worker {
    pub fn standard(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            kind: WorkerKind::Honest { recall_scale: 1.0 },
        }
    }

    pub fn is_spammer(&self) -> bool {
        matches!(self.kind, WorkerKind::Spammer)
    }
}

/// `n` workers, of which `floor(n * fraction)` or one more are spammers.
/// Honest workers get a uniform ±10% recall multiplier.
pub fn sample_worker_pool(n: usize, spammer_fraction: f64, master_seed: u64) -> Result<Vec<Worker>> {
    if !(0.0..=1.0).contains(&spammer_fraction) {
        return Err(Error::out_of_range("spammer_fraction", spammer_fraction, "[0, 1]"));
    }
    let mut rng = seed::rng(seed::stream_seed(master_seed, &[POOL_SALT, n as u64]));
    let expected = n as f64 * spammer_fraction;
    let mut spammers = expected.floor() as usize;
    if rng.random_bool((expected - expected.floor()).clamp(0.0, 1.0)) {
        spammers += 1;
    }
    let spammers = spammers.min(n);
    let mut is_spammer = vec![false; n];
    is_spammer[..spammers].fill(true);
    is_spammer.shuffle(&mut rng);
    let width = n.saturating_sub(1).to_string().len();
    Ok(is_spammer
        .into_iter()
        .enumerate()
        .map(|(i, spam)| Worker {
            id: format!("w{i:0width$}"),
            kind: if spam {
                WorkerKind::Spammer
            } else {
                WorkerKind::Honest {
                    recall_scale: 1.0 + rng.random_range(-HONEST_RECALL_JITTER..=HONEST_RECALL_JITTER),
                }
            },
        })
        .collect())
}

/// Whether a (video, label) pair belongs to the hard component. Depends only
/// on the pair, so every worker finds the same pairs hard.
pub fn is_hard_pair(video: &str, label: LabelId, hard_fraction: f64) -> bool {
    hard_fraction > 0.0
        && seed::unit_interval(seed::stream_seed(HARD_SALT, &[seed::hash_str(video), u64::from(label.0)]))
            < hard_fraction
}

/// Seed for one task: a worker answering one question subset of one video
/// in one iteration.
pub fn task_seed(master: u64, worker: &str, video: &str, iteration: u32, subset: usize) -> u64 {
    seed::stream_seed(
        master,
        &[
            TASK_SALT,
            seed::hash_str(worker),
            seed::hash_str(video),
            u64::from(iteration),
            subset as u64,
        ],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskQuestion {
    pub question: QuestionId,
    #[serde(default)]
    pub gold: bool,
}

impl From<QuestionId> for TaskQuestion {
    fn from(question: QuestionId) -> Self {
        Self {
            question,
            gold: false,
        }
    }
}

/// Generates annotation events from a calibrated behavior.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    taxonomy: &'a Taxonomy,
    behavior: &'a WorkerBehavior,
    clock: IterationClock,
}

impl<'a> Simulator<'a> {
    /// Uses the reference time model corrected by the behavior's observed
    /// iteration times.
    pub fn new(taxonomy: &'a Taxonomy, behavior: &'a WorkerBehavior) -> Self {
        let clock = IterationClock::with_observed(
            TimeModel::default(),
            taxonomy.question_count(),
            behavior.observed_iterations(),
        );
        Self::with_clock(taxonomy, behavior, clock)
    }

    pub fn with_clock(taxonomy: &'a Taxonomy, behavior: &'a WorkerBehavior, clock: IterationClock) -> Self {
        Self {
            taxonomy,
            behavior,
            clock,
        }
    }

    pub fn taxonomy(&self) -> &'a Taxonomy {
        self.taxonomy
    }

    pub fn behavior(&self) -> &'a WorkerBehavior {
        self.behavior
    }

    pub fn clock(&self) -> &IterationClock {
        &self.clock
    }

    /// Expected seconds for one task of `questions` questions on `video`
    /// before per-worker and per-task noise.
    pub fn expected_task_seconds(&self, video_seconds: f64, questions: usize, interface_k: usize, modifiers: ModifierSet) -> f64 {
        let k = interface_k.clamp(1, self.taxonomy.question_count());
        let rates = self.behavior.apply_modifiers(modifiers, k);
        let correction = self.clock.correction(k).map_or(1.0, |(c, _)| c);
        let tasks_per_iteration = self.taxonomy.question_count().div_ceil(k) as f64;
        self.clock.model.for_video_length(video_seconds).task_seconds(questions.max(1)) * correction * rates.time_ratio
            * self.behavior.speed_multiplier
            + rates.extra_seconds_per_iteration / tasks_per_iteration
    }

    /// One worker answering `questions` about `video`.
    ///
    /// A positive label is detected with the worker's effective recall, lower
    /// on hard pairs. A question is answered yes when any of its positive
    /// labels is detected, and then exactly the detected labels are selected.
    /// A question with no positive label is answered yes with the
    /// false-positive rate, selecting one decoy member fixed per
    /// (video, question).
    #[allow(clippy::too_many_arguments)]
    pub fn simulate_task(
        &self,
        worker: &Worker,
        video: &VideoTruth,
        questions: &[TaskQuestion],
        interface_k: usize,
        modifiers: ModifierSet,
        iteration: u32,
        task_seed: u64,
    ) -> Vec<AnnotationEvent> {
        if questions.is_empty() {
            return Vec::new();
        }
        let mut rng = seed::rng(task_seed);
        let k = interface_k.clamp(1, self.taxonomy.question_count());
        let rates = self.behavior.apply_modifiers(modifiers, k);
        let h = self.behavior.hard_fraction;
        let m = self.behavior.hard_recall_multiplier;

        let base_seconds = self.expected_task_seconds(video.duration, questions.len(), k, modifiers);
        let noise = LogNormal::new(-0.5 * TIME_SIGMA * TIME_SIGMA, TIME_SIGMA).expect("valid sigma");
        let mut total = base_seconds * noise.sample(&mut rng);
        if worker.is_spammer() {
            total *= SPAMMER_TIME_FACTOR;
        }
        let per_question = total / questions.len() as f64;

        let recall = match worker.kind {
            WorkerKind::Honest { recall_scale } => (rates.recall * recall_scale).clamp(0.0, 1.0),
            WorkerKind::Spammer => 0.0,
        };
        let hard_recall = recall * m;
        let easy_recall = if h > 0.0 {
            (recall * (1.0 - h * m) / (1.0 - h)).min(1.0)
        } else {
            recall
        };

        let mut events = Vec::with_capacity(questions.len());
        for tq in questions {
            let Some(q) = self.taxonomy.question(tq.question) else {
                continue;
            };
            let (gate, members) = if worker.is_spammer() {
                if rng.random_bool(SPAMMER_GATE_RATE) {
                    (true, vec![q.members[rng.random_range(0..q.members.len())]])
                } else {
                    (false, Vec::new())
                }
            } else {
                let mut detected = Vec::new();
                let mut any_positive = false;
                for &label in &q.members {
                    if video.has_label(label) {
                        any_positive = true;
                        let r = if is_hard_pair(&video.video, label, h) {
                            hard_recall
                        } else {
                            easy_recall
                        };
                        if rng.random::<f64>() < r {
                            detected.push(label);
                        }
                    }
                }
                if !detected.is_empty() {
                    (true, detected)
                } else if !any_positive && rng.random::<f64>() < rates.fp_rate {
                    (true, vec![decoy(&video.video, q.id, &q.members)])
                } else {
                    (false, Vec::new())
                }
            };
            events.push(AnnotationEvent {
                worker: worker.id.clone(),
                video: video.video.clone(),
                question: tq.question,
                gate,
                members,
                elapsed: per_question,
                iteration,
                gold: tq.gold,
            });
        }
        events
    }

    /// One full iteration over every video, each subset answered by a worker
    /// drawn deterministically from `workers`. Output order follows `truths`
    /// then `plan`, whatever the thread count.
    pub fn simulate_pass(
        &self,
        truths: &[VideoTruth],
        plan: &SubsetPlan,
        modifiers: ModifierSet,
        iteration: u32,
        master_seed: u64,
        workers: &[Worker],
    ) -> Vec<AnnotationEvent> {
        assert!(!workers.is_empty(), "need at least one worker");
        truths
            .par_iter()
            .map(|video| {
                let mut out = Vec::with_capacity(self.taxonomy.question_count());
                for (si, subset) in plan.subsets.iter().enumerate() {
                    let pick = seed::stream_seed(
                        master_seed,
                        &[ASSIGN_SALT, seed::hash_str(&video.video), u64::from(iteration), si as u64],
                    );
                    let worker = &workers[(pick % workers.len() as u64) as usize];
                    let tseed = task_seed(master_seed, &worker.id, &video.video, iteration, si);
                    let mut order: Vec<TaskQuestion> = subset.iter().copied().map(TaskQuestion::from).collect();
                    order.shuffle(&mut seed::rng(seed::mix(tseed, ORDER_SALT)));
                    out.extend(self.simulate_task(worker, video, &order, plan.k, modifiers, iteration, tseed));
                }
                out
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }
}

fn decoy(video: &str, question: QuestionId, members: &[LabelId]) -> LabelId {
    let h = seed::stream_seed(DECOY_SALT, &[seed::hash_str(video), u64::from(question.0)]);
    members[(h % members.len() as u64) as usize]
}
