use serde::{Deserialize, Serialize};

use super::ingest::{StatsAccumulator, WorkerStats};
use crate::taxonomy::Taxonomy;
use crate::workersim::{
    sample_worker_pool, synthesize_truth, task_seed, AnnotationEvent, ModifierSet, Simulator, SynthOptions,
    TaskQuestion, VideoTruth, Worker, WorkerBehavior, WorkerKind,
};
use crate::{seed, Result};

const PARTITION_SALT: u64 = 0x5041_5254;

/// Events of `iterations` full passes, each with its own question partition.
pub fn simulate_campaign(
    sim: &Simulator<'_>,
    truths: &[VideoTruth],
    k: usize,
    iterations: u32,
    modifiers: ModifierSet,
    workers: &[Worker],
    master_seed: u64,
) -> Result<Vec<AnnotationEvent>> {
    let mut events = Vec::new();
    for it in 0..iterations {
        let plan = sim
            .taxonomy()
            .partition_questions(k, seed::stream_seed(master_seed, &[PARTITION_SALT, u64::from(it)]))?;
        events.extend(sim.simulate_pass(truths, &plan, modifiers, it, master_seed, workers));
    }
    Ok(events)
}

/// Shape of one seeded quality-control trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcTrial {
    pub honest: usize,
    pub spammers: usize,
    pub tasks_per_worker: usize,
    /// Gold duplicates added to each all-question task.
    pub gold_per_task: usize,
}

impl Default for QcTrial {
    fn default() -> Self {
        Self {
            honest: 50,
            spammers: 1,
            tasks_per_worker: 20,
            gold_per_task: 3,
        }
    }
}

/// Simulates every worker answering its own videos with the all-question
/// interface plus gold duplicates, and returns the pool's statistics with
/// the ids of the planted spammers.
pub fn qc_trial(
    tax: &Taxonomy,
    behavior: &WorkerBehavior,
    trial: &QcTrial,
    master_seed: u64,
) -> Result<(Vec<WorkerStats>, Vec<String>)> {
    let mut workers = sample_worker_pool(trial.honest, 0.0, master_seed)?;
    let spammers: Vec<String> = (0..trial.spammers).map(|i| format!("s{i}")).collect();
    workers.extend(spammers.iter().map(|id| Worker {
        id: id.clone(),
        kind: WorkerKind::Spammer,
    }));
    let truths = synthesize_truth(
        tax,
        workers.len() * trial.tasks_per_worker,
        &SynthOptions::default(),
        seed::mix(master_seed, 1),
    )?;
    let sim = Simulator::new(tax, behavior);
    let k = tax.question_count();
    let mut acc = StatsAccumulator::new();
    for (wi, worker) in workers.iter().enumerate() {
        for video in &truths[wi * trial.tasks_per_worker..(wi + 1) * trial.tasks_per_worker] {
            let mut questions: Vec<TaskQuestion> = tax.questions().iter().map(|q| q.id.into()).collect();
            let positives: Vec<_> = video.labels.iter().filter_map(|l| tax.question_of(*l)).collect();
            for g in 0..trial.gold_per_task.min(positives.len() * trial.gold_per_task) {
                questions.push(TaskQuestion {
                    question: positives[g % positives.len()],
                    gold: true,
                });
            }
            let tseed = task_seed(master_seed, &worker.id, &video.video, 0, 0);
            for e in sim.simulate_task(worker, video, &questions, k, ModifierSet::NONE, 0, tseed) {
                acc.add(&e);
            }
        }
    }
    Ok((acc.stats(), spammers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{aggregate, metrics, BinaryLabels};

    #[test]
    fn campaign_events_cover_every_iteration() {
        let tax = Taxonomy::sample();
        let b = WorkerBehavior::reference();
        let sim = Simulator::new(&tax, &b);
        let truths = synthesize_truth(&tax, 30, &SynthOptions::default(), 2).unwrap();
        let workers = sample_worker_pool(5, 0.0, 1).unwrap();
        let events = simulate_campaign(&sim, &truths, 7, 3, ModifierSet::NONE, &workers, 4).unwrap();
        assert_eq!(events.len(), 30 * 52 * 3);
        let ids: Vec<String> = truths.iter().map(|t| t.video.clone()).collect();
        let pred = aggregate(&tax, &ids, &events, 1).unwrap();
        let truth = BinaryLabels::from_truth(&truths, tax.label_count()).unwrap();
        assert!(metrics(&pred, &truth).unwrap().recall.unwrap() > 0.5);
    }

    #[test]
    fn qc_trial_shapes() {
        let tax = Taxonomy::sample();
        let b = WorkerBehavior::reference();
        let trial = QcTrial {
            honest: 8,
            spammers: 1,
            tasks_per_worker: 4,
            gold_per_task: 2,
        };
        let (stats, spam) = qc_trial(&tax, &b, &trial, 3).unwrap();
        assert_eq!(stats.len(), 9);
        assert_eq!(spam, vec!["s0".to_string()]);
        assert!(stats.iter().all(|s| s.tasks == 4 && s.gold_recall.is_some()));
        let s0 = stats.iter().find(|s| s.worker == "s0").unwrap();
        let honest_max = stats.iter().filter(|s| s.worker != "s0").map(|s| s.median_seconds).fold(0.0, f64::max);
        assert!(s0.median_seconds < honest_max);
    }
}
