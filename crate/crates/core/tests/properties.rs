//! Monte Carlo and cross-module properties.

use annocamp::costmodel::{IterationClock, TimeModel};
use annocamp::evaluate::{
    aggregate, binomial_se, metrics, recall_vs_duration, timing_summary, BinaryLabels, LabelMatrix, Metrics,
};
use annocamp::planner::{optimize, predict, BudgetConstraint};
use annocamp::taxonomy::Taxonomy;
use annocamp::workersim::{
    synthesize_truth, AnnotationEvent, ModifierSet, Regime, Simulator, SynthOptions, TaskQuestion, VideoTruth,
    Worker, WorkerBehavior,
};
use rand_distr::{Distribution, StandardNormal};

fn workers() -> Vec<Worker> {
    (0..50).map(|i| Worker::standard(format!("w{i}"))).collect()
}

fn truth_and_ids(tax: &Taxonomy, videos: usize, seed: u64) -> (Vec<VideoTruth>, Vec<String>, BinaryLabels) {
    let truths = synthesize_truth(tax, videos, &SynthOptions::default(), seed).unwrap();
    let ids = truths.iter().map(|t| t.video.clone()).collect();
    let bin = BinaryLabels::from_truth(&truths, tax.label_count()).unwrap();
    (truths, ids, bin)
}

fn run(
    tax: &Taxonomy,
    b: &WorkerBehavior,
    truths: &[VideoTruth],
    k: usize,
    n: u32,
    modifiers: ModifierSet,
    seed: u64,
) -> Vec<AnnotationEvent> {
    let sim = Simulator::new(tax, b);
    let mut events = Vec::new();
    for it in 0..n {
        let plan = tax.partition_questions(k, seed + u64::from(it)).unwrap();
        events.extend(sim.simulate_pass(truths, &plan, modifiers, it, seed, &workers()));
    }
    events
}

fn assert_within_3se(m: &Metrics, recall: f64, precision: f64, what: &str) {
    let (se_r, se_p) = m.standard_errors();
    let (r, p) = (m.recall.unwrap(), m.precision.unwrap());
    assert!((r - recall).abs() <= 3.0 * se_r.unwrap(), "{what}: recall {r} vs {recall}");
    assert!((p - precision).abs() <= 3.0 * se_p.unwrap(), "{what}: precision {p} vs {precision}");
}

#[test]
fn anchors_are_reproduced_by_simulation() {
    let tax = Taxonomy::sample();
    let b = WorkerBehavior::reference();
    let (truths, ids, truth) = truth_and_ids(&tax, 10_000, 21);
    for a in &b.anchors {
        let events = run(&tax, &b, &truths, a.k, 1, ModifierSet::NONE, 5);
        let m = metrics(&aggregate(&tax, &ids, &events, 1).unwrap(), &truth).unwrap();
        let g = truth.positive_count() as f64 / truths.len() as f64;
        // expected precision at the realised prevalence
        let f = b.fp_rate_at(a.k);
        let p = a.recall * g / (a.recall * g + f * (52.0 - g));
        assert_within_3se(&m, a.recall, p, &format!("k={}", a.k));
        let minutes = timing_summary(&events, ids.len(), 1).minutes_per_video;
        assert!((minutes / a.iteration_minutes - 1.0).abs() < 0.01, "k={} {minutes}", a.k);
    }
}

#[test]
fn recall_rises_with_worker_recall() {
    let tax = Taxonomy::sample();
    let (truths, ids, truth) = truth_and_ids(&tax, 10_000, 22);
    let mut last = 0.0;
    for r in [0.2, 0.4, 0.6, 0.8] {
        let mut b = WorkerBehavior::reference();
        b.recall_curve = vec![(1, r), (52, r)];
        let events = run(&tax, &b, &truths, 52, 1, ModifierSet::NONE, 6);
        let got = metrics(&aggregate(&tax, &ids, &events, 1).unwrap(), &truth).unwrap().recall.unwrap();
        assert!(got > last, "{r}: {got} after {last}");
        last = got;
    }
}

#[test]
fn undetectable_pairs_cap_union_recall() {
    let tax = Taxonomy::sample();
    let b = WorkerBehavior::reference().with_mixture(0.2, 0.0).unwrap();
    let (truths, ids, truth) = truth_and_ids(&tax, 2_000, 23);
    let events = run(&tax, &b, &truths, 52, 30, ModifierSet::NONE, 7);
    let m = metrics(&aggregate(&tax, &ids, &events, 1).unwrap(), &truth).unwrap();
    let r = m.recall.unwrap();
    assert!((r - 0.8).abs() < 0.02, "{r}");
    assert!((b.union_recall(0.45, 30) - 0.8).abs() < 1e-6);
}

#[test]
fn union_recall_never_drops_with_more_iterations() {
    let tax = Taxonomy::sample();
    let b = WorkerBehavior::reference_correlated();
    let (truths, ids, truth) = truth_and_ids(&tax, 500, 24);
    let events = run(&tax, &b, &truths, 13, 6, ModifierSet::NONE, 8);
    let matrix = LabelMatrix::from_events(&tax, &ids, &events).unwrap();
    let mut last = 0.0;
    for n in 1..=6 {
        let prefix: Vec<&AnnotationEvent> = events.iter().filter(|e| e.iteration < n).collect();
        let pred = LabelMatrix::from_events(&tax, &ids, prefix).unwrap().threshold(1);
        let r = metrics(&pred, &truth).unwrap().recall.unwrap();
        assert!(r >= last);
        last = r;
    }
    assert_eq!(matrix.threshold(1), aggregate(&tax, &ids, &events, 1).unwrap());
}

#[test]
fn planner_prediction_matches_simulation() {
    let tax = Taxonomy::sample();
    let b = WorkerBehavior::reference_correlated();
    let clock = IterationClock::with_observed(TimeModel::default(), 52, b.observed_iterations());
    let plan = optimize(&b, &clock, &BudgetConstraint::new(4.0, None).unwrap()).unwrap();
    assert_eq!((plan.k, plan.n), (52, 3));
    let (truths, ids, truth) = truth_and_ids(&tax, 10_000, 25);
    let events = run(&tax, &b, &truths, plan.k, plan.n, plan.modifiers, 9);
    let m = metrics(&aggregate(&tax, &ids, &events, 1).unwrap(), &truth).unwrap();
    assert_within_3se(&m, plan.predicted_recall, plan.predicted_precision.unwrap(), "k=52 n=3");
    let minutes = timing_summary(&events, ids.len(), plan.n).minutes_per_video;
    assert!((minutes / plan.minutes_per_video - 1.0).abs() < 0.01);

    // a modified few-question plan
    let few = ModifierSet::recommended(Regime::FewQuestions);
    let plan = predict(&b, &clock, 1, 1, few).unwrap();
    let events = run(&tax, &b, &truths, 1, 1, few, 10);
    let m = metrics(&aggregate(&tax, &ids, &events, 1).unwrap(), &truth).unwrap();
    assert_within_3se(&m, plan.predicted_recall, plan.predicted_precision.unwrap(), "k=1 modified");
}

#[test]
fn gold_duplicates_never_count() {
    let tax = Taxonomy::sample();
    let b = WorkerBehavior::reference();
    let sim = Simulator::new(&tax, &b);
    let (truths, ids, _) = truth_and_ids(&tax, 50, 26);
    let w = Worker::standard("w");
    let mut plain = Vec::new();
    let mut with_gold = Vec::new();
    for t in &truths {
        let qs: Vec<TaskQuestion> = tax.questions().iter().map(|q| q.id.into()).collect();
        plain.extend(sim.simulate_task(&w, t, &qs, 52, ModifierSet::NONE, 0, 1));
        let mut gold = qs.clone();
        gold.extend(t.labels.iter().map(|l| TaskQuestion {
            question: tax.question_of(*l).unwrap(),
            gold: true,
        }));
        let events = sim.simulate_task(&w, t, &gold, 52, ModifierSet::NONE, 0, 1);
        assert!(events.iter().any(|e| e.gold));
        with_gold.extend(events);
    }
    let regular: Vec<AnnotationEvent> = with_gold.iter().filter(|e| !e.gold).cloned().collect();
    assert_eq!(
        aggregate(&tax, &ids, &with_gold, 1).unwrap(),
        aggregate(&tax, &ids, &regular, 1).unwrap()
    );
    assert_eq!(timing_summary(&with_gold, ids.len(), 1), timing_summary(&regular, ids.len(), 1));
    assert_eq!(plain.len(), regular.len());
}

/// Pearson on a bivariate normal sample with correlation 0.2.
#[test]
fn duration_correlation_fixture() {
    let mut rng = annocamp::seed::rng(27);
    let rho: f64 = 0.2;
    let mut rec = Vec::new();
    let mut dur = Vec::new();
    for _ in 0..157 {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        dur.push(10.0 + 3.0 * z1);
        rec.push(0.5 + 0.1 * (rho * z1 + (1.0 - rho * rho).sqrt() * z2));
    }
    let r = recall_vs_duration(&rec, &dur).unwrap();
    assert!((r - 0.2).abs() <= 0.15, "{r}");
}

#[test]
fn binomial_standard_error() {
    assert!((binomial_se(0.5, 100) - 0.05).abs() < 1e-15);
    assert!(binomial_se(0.5, 0).is_infinite());
}
