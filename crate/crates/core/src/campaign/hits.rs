use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::costmodel::{HitBudget, TimeModel};
use crate::taxonomy::{QuestionId, SubsetPlan};
use crate::workersim::TaskQuestion;
use crate::{seed, Error, Result};

const PACK_SALT: u64 = 0x5041_434b;
const ORDER_SALT: u64 = 0x4f52_4452;
const GOLD_SALT: u64 = 0x474f_4c44;

/// Positive fraction that positive bias aims for.
pub const TARGET_POSITIVE_FRACTION: f64 = 1.0 / 3.0;

/// One video's share of a HIT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitVideo {
    pub video: String,
    /// Index of the question subset this task covers.
    pub subset: usize,
    /// Questions in display order; gold duplicates are flagged.
    pub questions: Vec<TaskQuestion>,
}

impl HitVideo {
    pub fn regular(&self) -> impl Iterator<Item = QuestionId> + '_ {
        self.questions.iter().filter(|q| !q.gold).map(|q| q.question)
    }

    pub fn gold_count(&self) -> usize {
        self.questions.iter().filter(|q| q.gold).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSpec {
    pub id: String,
    pub videos: Vec<HitVideo>,
    pub expected_seconds: f64,
    /// Expected share of "yes" answers, gold included.
    pub expected_positive_fraction: f64,
    pub pay: f64,
}

impl HitSpec {
    pub fn question_count(&self) -> usize {
        self.videos.iter().map(|v| v.questions.len()).sum()
    }

    pub fn gold_count(&self) -> usize {
        self.videos.iter().map(HitVideo::gold_count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PackOptions {
    pub positive_bias: bool,
    pub grouping: bool,
    /// Expected positive questions per video.
    pub mean_positives: f64,
}

impl Default for PackOptions {
    fn default() -> Self {
        Self {
            positive_bias: false,
            grouping: false,
            mean_positives: 3.7,
        }
    }
}

/// Gold duplicates per regular question that lift the expected positive
/// fraction to one third.
pub fn duplicates_per_question(mean_positives: f64, q_top: usize) -> f64 {
    let base = mean_positives / q_top as f64;
    ((TARGET_POSITIVE_FRACTION - base) / (1.0 - TARGET_POSITIVE_FRACTION)).max(0.0)
}

struct Task {
    video: usize,
    subset: usize,
}

/// Packs every (video, subset) task of one iteration into HITs of about
/// `budget.target_seconds` expected work.
///
/// Tasks are grouped by subset size so that each HIT holds equally long
/// tasks; with `grouping` a HIT never mixes subsets. With `positive_bias`,
/// each HIT receives the rounded number of gold duplicates, drawn from the
/// known positives of its videos, and the fill accounts for their time.
pub fn pack_hits(
    videos: &[String],
    plan: &SubsetPlan,
    model: &TimeModel,
    budget: &HitBudget,
    options: &PackOptions,
    known_positives: &BTreeMap<String, Vec<QuestionId>>,
    master_seed: u64,
) -> Result<Vec<HitSpec>> {
    if videos.is_empty() {
        return Err(Error::Degenerate("no videos to pack".into()));
    }
    if plan.is_empty() {
        return Err(Error::Degenerate("empty subset plan".into()));
    }
    let q_top = plan.question_total();
    let per_question = if options.positive_bias {
        duplicates_per_question(options.mean_positives, q_top)
    } else {
        0.0
    };
    let base_rate = options.mean_positives / q_top as f64;

    let mut order: Vec<usize> = (0..videos.len()).collect();
    order.shuffle(&mut seed::rng(seed::stream_seed(master_seed, &[PACK_SALT])));

    // tasks in packing order, split into runs that may share a HIT
    let mut by_size: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (si, s) in plan.subsets.iter().enumerate() {
        by_size.entry(s.len()).or_default().push(si);
    }
    let mut runs: Vec<Vec<Task>> = Vec::new();
    for subsets in by_size.into_values().rev() {
        let tasks_of = |si: usize| order.iter().map(move |&video| Task { video, subset: si });
        if options.grouping {
            runs.extend(subsets.into_iter().map(|si| tasks_of(si).collect()));
        } else {
            runs.push(subsets.into_iter().flat_map(tasks_of).collect());
        }
    }

    let mut hits = Vec::new();
    for run in runs {
        let mut start = 0;
        while start < run.len() {
            let mut end = start;
            let mut regular = 0usize;
            loop {
                let next = regular + plan.subsets[run[end].subset].len();
                let dups = (next as f64 * per_question).round() as usize;
                let secs = (end + 1 - start) as f64 * model.a + model.b * (next + dups) as f64;
                if end > start && secs > budget.target_seconds {
                    break;
                }
                regular = next;
                end += 1;
                if end == run.len() {
                    break;
                }
            }
            let dups = (regular as f64 * per_question).round() as usize;
            let hit_index = hits.len();
            hits.push(build_hit(
                hit_index,
                &run[start..end],
                videos,
                plan,
                model,
                budget,
                options.grouping,
                dups,
                known_positives,
                master_seed,
            )?);
            let expected_yes = base_rate * regular as f64 + dups as f64;
            let last = hits.last_mut().expect("just pushed");
            last.expected_positive_fraction = expected_yes / (regular + dups) as f64;
            start = end;
        }
    }
    Ok(hits)
}

#[allow(clippy::too_many_arguments)]
fn build_hit(
    index: usize,
    tasks: &[Task],
    videos: &[String],
    plan: &SubsetPlan,
    model: &TimeModel,
    budget: &HitBudget,
    grouping: bool,
    duplicates: usize,
    known_positives: &BTreeMap<String, Vec<QuestionId>>,
    master_seed: u64,
) -> Result<HitSpec> {
    let hit_seed = seed::stream_seed(master_seed, &[ORDER_SALT, index as u64]);
    let mut shared: Option<Vec<QuestionId>> = None;
    let mut out: Vec<HitVideo> = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut qs = plan.subsets[t.subset].clone();
            if grouping {
                qs = shared
                    .get_or_insert_with(|| {
                        qs.shuffle(&mut seed::rng(hit_seed));
                        qs.clone()
                    })
                    .clone();
            } else {
                qs.shuffle(&mut seed::rng(seed::mix(hit_seed, i as u64)));
            }
            HitVideo {
                video: videos[t.video].clone(),
                subset: t.subset,
                questions: qs.into_iter().map(TaskQuestion::from).collect(),
            }
        })
        .collect();

    if duplicates > 0 {
        let mut pools: Vec<(usize, Vec<QuestionId>)> = out
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let known = known_positives.get(&v.video)?;
                (!known.is_empty()).then(|| (i, known.clone()))
            })
            .collect();
        if pools.is_empty() {
            let ids: Vec<&str> = out.iter().map(|v| v.video.as_str()).collect();
            return Err(Error::Gold(format!(
                "HIT {index} needs {duplicates} duplicates but none of {} has a known positive",
                ids.join(", ")
            )));
        }
        let mut rng = seed::rng(seed::stream_seed(master_seed, &[GOLD_SALT, index as u64]));
        for (_, pool) in &mut pools {
            pool.shuffle(&mut rng);
        }
        for d in 0..duplicates {
            let (vi, pool) = &pools[d % pools.len()];
            let q = pool[(d / pools.len()) % pool.len()];
            let list = &mut out[*vi].questions;
            let at = rng.random_range(0..=list.len());
            list.insert(at, TaskQuestion { question: q, gold: true });
        }
    }

    let expected_seconds = out
        .iter()
        .map(|v| model.task_seconds(v.questions.len()))
        .sum();
    Ok(HitSpec {
        id: format!("h{index:05}"),
        videos: out,
        expected_seconds,
        expected_positive_fraction: 0.0,
        pay: budget.pay_per_hit,
    })
}

/// Known-positive questions per video from a label set.
pub fn known_positive_questions<'a>(
    tax: &crate::taxonomy::Taxonomy,
    positives: impl IntoIterator<Item = (&'a str, crate::taxonomy::LabelId)>,
) -> BTreeMap<String, Vec<QuestionId>> {
    let mut out: BTreeMap<String, Vec<QuestionId>> = BTreeMap::new();
    for (video, label) in positives {
        if let Some(q) = tax.question_of(label) {
            let list = out.entry(video.to_string()).or_default();
            if !list.contains(&q) {
                list.push(q);
            }
        }
    }
    for list in out.values_mut() {
        list.sort_unstable();
    }
    out
}

pub fn write_hits_jsonl(mut writer: impl Write, hits: &[HitSpec]) -> Result<()> {
    for h in hits {
        serde_json::to_writer(&mut writer, h)?;
        writer.write_all(b"\n").map_err(|e| Error::io("<hits>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::Taxonomy;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn ids(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("v{i:04}")).collect()
    }

    fn every_video_known(videos: &[String]) -> BTreeMap<String, Vec<QuestionId>> {
        videos
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), vec![QuestionId((i % 52) as u32), QuestionId(((i + 7) % 52) as u32)]))
            .collect()
    }

    fn pack(m: usize, k: usize, opts: PackOptions) -> Result<Vec<HitSpec>> {
        let tax = Taxonomy::sample();
        let plan = tax.partition_questions(k, 3).unwrap();
        let v = ids(m);
        pack_hits(&v, &plan, &TimeModel::default(), &HitBudget::default(), &opts, &every_video_known(&v), 9)
    }

    #[test]
    fn all_questions_two_videos_per_hit() {
        let hits = pack(140, 52, PackOptions::default()).unwrap();
        assert_eq!(hits.len(), 70);
        assert!(hits.iter().all(|h| h.videos.len() == 2 && h.gold_count() == 0));
        assert!((hits[0].expected_seconds - 2.0 * 73.9).abs() < 1e-9);
        assert_eq!(hits[0].pay, 0.40);
    }

    #[test]
    fn grouping_shares_question_lists() {
        let opts = PackOptions {
            grouping: true,
            ..PackOptions::default()
        };
        for hit in pack(60, 5, opts).unwrap() {
            let first: Vec<_> = hit.videos[0].regular().collect();
            assert!(hit.videos.iter().all(|v| v.regular().collect::<Vec<_>>() == first));
        }
    }

    #[test]
    fn positive_bias_reaches_one_third() {
        let opts = PackOptions {
            positive_bias: true,
            ..PackOptions::default()
        };
        let d = 52.0 * duplicates_per_question(3.7, 52);
        // (3.7 + d) / (52 + d) = 1/3
        assert!((d - 20.45).abs() < 1e-9);
        assert!(((3.7 + d) / (52.0 + d) - 1.0 / 3.0).abs() < 1e-12);
        // 2520 videos divide evenly into HITs of 1 to 10 tasks, so no HIT is
        // a short remainder
        for k in [1, 3, 7, 26, 52] {
            for hit in pack(2520, k, opts).unwrap() {
                assert!((hit.expected_positive_fraction - 1.0 / 3.0).abs() < 0.05, "k={k} {}", hit.expected_positive_fraction);
                assert!(hit.expected_seconds <= 150.0 + 1e-9 || hit.videos.len() == 1);
                for v in &hit.videos {
                    assert_eq!(v.regular().count(), v.questions.len() - v.gold_count());
                }
            }
        }
        let hits = pack(100, 52, opts).unwrap();
        // one 52-question task plus about 20 duplicates fits once per HIT
        assert!(hits.iter().all(|h| h.videos.len() == 1 && (20..=21).contains(&h.gold_count())));
    }

    #[test]
    fn missing_gold_is_an_error() {
        let tax = Taxonomy::sample();
        let plan = tax.partition_questions(52, 0).unwrap();
        let opts = PackOptions {
            positive_bias: true,
            ..PackOptions::default()
        };
        let r = pack_hits(&ids(4), &plan, &TimeModel::default(), &HitBudget::default(), &opts, &BTreeMap::new(), 1);
        assert!(matches!(r, Err(Error::Gold(_))));
        assert!(pack_hits(&[], &plan, &TimeModel::default(), &HitBudget::default(), &PackOptions::default(), &BTreeMap::new(), 1).is_err());
    }

    #[test]
    fn deterministic() {
        let opts = PackOptions {
            positive_bias: true,
            grouping: true,
            mean_positives: 3.7,
        };
        assert_eq!(pack(37, 4, opts).unwrap(), pack(37, 4, opts).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn conservation_and_time_bounds(m in 1usize..80, k in 1usize..=52, grouping: bool, bias: bool) {
            let opts = PackOptions { positive_bias: bias, grouping, mean_positives: 3.7 };
            let hits = pack(m, k, opts).unwrap();
            let mut seen = BTreeSet::new();
            for h in &hits {
                prop_assert!(h.expected_seconds <= 150.0 + 1e-9 || h.videos.len() == 1);
                for v in &h.videos {
                    for q in v.regular() {
                        prop_assert!(seen.insert((v.video.clone(), q)), "duplicate pair");
                    }
                }
            }
            prop_assert_eq!(seen.len(), m * 52);
        }
    }
}
