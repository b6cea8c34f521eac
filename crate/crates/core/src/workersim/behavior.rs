use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::costmodel::ObservedIteration;
use crate::evaluate::analytic;
use crate::{Error, Result};

/// Interfaces with at most this many questions per task are "few-question".
pub const FEW_QUESTION_MAX_K: usize = 7;

/// Measured single-iteration accuracy of one interface size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyAnchor {
    pub k: usize,
    pub recall: f64,
    pub precision: f64,
    /// Observed minutes per video for one full iteration.
    pub iteration_minutes: f64,
}

impl AccuracyAnchor {
    /// Single-question and all-question measurements of the reference study.
    pub fn reference() -> Vec<AccuracyAnchor> {
        vec![
            AccuracyAnchor {
                k: 1,
                recall: 0.563,
                precision: 0.810,
                iteration_minutes: 8.61,
            },
            AccuracyAnchor {
                k: 52,
                recall: 0.450,
                precision: 0.864,
                iteration_minutes: 1.10,
            },
        ]
    }
}

/// Union recall of the all-question interface after 3 and 5 iterations.
pub const REFERENCE_UNION_RECALL: [(u32, f64); 2] = [(3, 0.767), (5, 0.853)];

/// Prevalence statistics of the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthStats {
    /// Expected positive questions per video.
    pub mean_positives: f64,
    pub q_top: usize,
}

impl Default for TruthStats {
    fn default() -> Self {
        Self {
            mean_positives: 3.7,
            q_top: 52,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerBehavior {
    /// `(k, recall)` knots, linearly interpolated.
    pub recall_curve: Vec<(usize, f64)>,
    /// `(k, per-negative-question false-positive probability)` knots.
    pub fp_rate_curve: Vec<(usize, f64)>,
    pub speed_multiplier: f64,
    /// Fraction of (video, label) pairs that are hard for everyone.
    pub hard_fraction: f64,
    /// Recall on a hard pair relative to the mean recall.
    pub hard_recall_multiplier: f64,
    pub stats: TruthStats,
    pub anchors: Vec<AccuracyAnchor>,
}

/// Builds a behavior whose curves pass through every anchor.
///
/// The false-positive rate at each anchor is the one that makes the
/// expected precision equal the anchor precision given the prevalence:
/// `f = r g (1 - p) / (p (Q - g))`.
pub fn calibrate(anchors: &[AccuracyAnchor], stats: TruthStats) -> Result<WorkerBehavior> {
    let g = stats.mean_positives;
    let q = stats.q_top as f64;
    if !(g > 0.0 && g < q) {
        return Err(Error::Calibration(format!(
            "mean positives {g} must lie in (0, {q})"
        )));
    }
    let mut anchors = anchors.to_vec();
    anchors.sort_by_key(|a| a.k);
    let distinct = {
        let mut ks: Vec<_> = anchors.iter().map(|a| a.k).collect();
        ks.dedup();
        ks.len()
    };
    if distinct < 2 || distinct != anchors.len() {
        return Err(Error::Calibration(
            "need at least two anchors with distinct k".into(),
        ));
    }
    let mut recall_curve = Vec::with_capacity(anchors.len());
    let mut fp_rate_curve = Vec::with_capacity(anchors.len());
    for a in &anchors {
        if a.k == 0 || a.k > stats.q_top {
            return Err(Error::Calibration(format!(
                "anchor k = {} outside 1..={}",
                a.k, stats.q_top
            )));
        }
        if !(0.0..=1.0).contains(&a.recall) || !(0.0..=1.0).contains(&a.precision) {
            return Err(Error::Calibration(format!(
                "anchor k = {}: recall and precision must lie in [0, 1]",
                a.k
            )));
        }
        if a.precision == 0.0 {
            return Err(Error::Calibration(format!(
                "anchor k = {}: zero precision has no finite false-positive rate",
                a.k
            )));
        }
        if !(a.iteration_minutes > 0.0) {
            return Err(Error::Calibration(format!(
                "anchor k = {}: iteration minutes must be positive",
                a.k
            )));
        }
        let f = a.recall * g * (1.0 - a.precision) / (a.precision * (q - g));
        if f > 1.0 {
            return Err(Error::Calibration(format!(
                "anchor k = {}: implied false-positive rate {f:.3} exceeds 1",
                a.k
            )));
        }
        recall_curve.push((a.k, a.recall));
        fp_rate_curve.push((a.k, f));
    }
    Ok(WorkerBehavior {
        recall_curve,
        fp_rate_curve,
        speed_multiplier: 1.0,
        hard_fraction: 0.0,
        hard_recall_multiplier: 1.0,
        stats,
        anchors,
    })
}

fn interpolate(knots: &[(usize, f64)], k: usize) -> f64 {
    let (k0, v0) = knots[0];
    if k <= k0 {
        return v0;
    }
    let (kn, vn) = knots[knots.len() - 1];
    if k >= kn {
        return vn;
    }
    let hi = knots.iter().position(|(kk, _)| *kk >= k).expect("k inside range");
    let (ka, va) = knots[hi - 1];
    let (kb, vb) = knots[hi];
    va + (vb - va) * (k - ka) as f64 / (kb - ka) as f64
}

impl WorkerBehavior {
    /// Reference calibration: the two anchors with prevalence 3.7 of 52.
    pub fn reference() -> Self {
        calibrate(&AccuracyAnchor::reference(), TruthStats::default()).expect("reference anchors are valid")
    }

    /// Reference calibration with the difficulty mixture fitted to the
    /// multi-iteration recall of the all-question interface.
    pub fn reference_correlated() -> Self {
        let q_top = TruthStats::default().q_top;
        Self::reference()
            .fit_mixture(q_top, &REFERENCE_UNION_RECALL)
            .expect("reference targets are reachable")
    }

    pub fn recall_at(&self, k: usize) -> f64 {
        interpolate(&self.recall_curve, k)
    }

    pub fn fp_rate_at(&self, k: usize) -> f64 {
        interpolate(&self.fp_rate_curve, k)
    }

    pub fn precision_at(&self, k: usize) -> Option<f64> {
        analytic::precision_identity(
            self.recall_at(k),
            self.fp_rate_at(k),
            self.stats.mean_positives,
            self.stats.q_top as f64,
        )
    }

    /// Holds recall flat at the smallest anchor's value up to `knee`, so the
    /// drop happens only beyond it.
    pub fn with_knee(mut self, knee: usize) -> Self {
        let (k0, r0) = self.recall_curve[0];
        let kn = self.recall_curve[self.recall_curve.len() - 1].0;
        if knee > k0 && knee < kn && !self.recall_curve.iter().any(|(k, _)| *k == knee) {
            self.recall_curve.push((knee, r0));
            self.recall_curve.sort_by_key(|(k, _)| *k);
        }
        self
    }

    pub fn with_mixture(mut self, hard_fraction: f64, hard_recall_multiplier: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&hard_fraction) {
            return Err(Error::out_of_range("hard_fraction", hard_fraction, "[0, 1)"));
        }
        if !(0.0..=1.0).contains(&hard_recall_multiplier) {
            return Err(Error::out_of_range(
                "hard_recall_multiplier",
                hard_recall_multiplier,
                "[0, 1]",
            ));
        }
        self.hard_fraction = hard_fraction;
        self.hard_recall_multiplier = hard_recall_multiplier;
        Ok(self)
    }

    pub fn is_correlated(&self) -> bool {
        self.hard_fraction > 0.0 && self.hard_recall_multiplier < 1.0
    }

    /// Union recall after `n` iterations under this behavior's correlation
    /// structure, for single-iteration mean recall `r`.
    pub fn union_recall(&self, r: f64, n: u32) -> f64 {
        analytic::mixture_union_recall(r, n, self.hard_fraction, self.hard_recall_multiplier)
    }

    /// Fits the difficulty mixture by grid search so that union recall at
    /// interface size `k` matches each `(iterations, recall)` target in the
    /// least-squares sense.
    pub fn fit_mixture(self, k: usize, targets: &[(u32, f64)]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Calibration("no multi-iteration targets".into()));
        }
        let r = self.recall_at(k);
        let mut best = (f64::INFINITY, 0.0, 1.0);
        for hi in 0..=400 {
            let h = hi as f64 * 0.0025;
            if h >= 1.0 {
                break;
            }
            for mi in 0..=100 {
                let m = mi as f64 * 0.01;
                if r * (1.0 - h * m) / (1.0 - h) > 1.0 {
                    continue;
                }
                let sse: f64 = targets
                    .iter()
                    .map(|&(n, t)| (analytic::mixture_union_recall(r, n, h, m) - t).powi(2))
                    .sum();
                if sse < best.0 {
                    best = (sse, h, m);
                }
            }
        }
        self.with_mixture(best.1, best.2)
    }

    pub fn observed_iterations(&self) -> Vec<ObservedIteration> {
        self.anchors
            .iter()
            .map(|a| ObservedIteration {
                k: a.k,
                minutes: a.iteration_minutes,
            })
            .collect()
    }

    /// Recall, false-positive rate and time multipliers for interface size
    /// `k` with `modifiers` active.
    pub fn apply_modifiers(&self, modifiers: ModifierSet, k: usize) -> AdjustedRates {
        let adj = modifiers.adjustment(Regime::of(k));
        let r0 = self.recall_at(k);
        let f0 = self.fp_rate_at(k);
        let g = self.stats.mean_positives;
        let q = self.stats.q_top as f64;
        let recall = (r0 * adj.recall_ratio).clamp(0.0, 1.0);
        let fp_rate = match analytic::precision_identity(r0, f0, g, q) {
            Some(p0) if adj.precision_ratio != 1.0 => {
                let p = (p0 * adj.precision_ratio).clamp(f64::MIN_POSITIVE, 1.0);
                (recall * g * (1.0 - p) / (p * (q - g))).clamp(0.0, 1.0)
            }
            _ => f0,
        };
        AdjustedRates {
            recall,
            fp_rate,
            time_ratio: adj.time_ratio,
            extra_seconds_per_iteration: adj.extra_seconds_per_iteration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedRates {
    pub recall: f64,
    pub fp_rate: f64,
    pub time_ratio: f64,
    pub extra_seconds_per_iteration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    FewQuestions,
    ManyQuestions,
}

impl Regime {
    pub fn of(k: usize) -> Self {
        if k <= FEW_QUESTION_MAX_K {
            Regime::FewQuestions
        } else {
            Regime::ManyQuestions
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modifier {
    PositiveBias,
    Grouping,
    SummaryPrompt,
    ForcedResponse,
}

impl Modifier {
    pub const ALL: [Modifier; 4] = [
        Modifier::PositiveBias,
        Modifier::Grouping,
        Modifier::SummaryPrompt,
        Modifier::ForcedResponse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modifier::PositiveBias => "positive_bias",
            Modifier::Grouping => "grouping",
            Modifier::SummaryPrompt => "summary_prompt",
            Modifier::ForcedResponse => "forced_response",
        }
    }

    /// Measured with/without effect in `regime`, if one was measured.
    pub fn effect(self, regime: Regime) -> Option<Adjustment> {
        use Modifier::*;
        use Regime::*;
        let ratio = |with: f64, without: f64| with / without;
        match (self, regime) {
            (PositiveBias, FewQuestions) => Some(Adjustment {
                recall_ratio: ratio(57.9, 53.2),
                precision_ratio: ratio(81.3, 79.0),
                time_ratio: ratio(3.6, 4.6),
                extra_seconds_per_iteration: 0.0,
            }),
            (Grouping, FewQuestions) => Some(Adjustment {
                recall_ratio: ratio(67.2, 70.4),
                precision_ratio: ratio(81.4, 77.7),
                time_ratio: ratio(5.1, 5.9),
                extra_seconds_per_iteration: 0.0,
            }),
            (Grouping, ManyQuestions) => Some(Adjustment {
                recall_ratio: ratio(55.2, 62.0),
                precision_ratio: ratio(79.0, 80.2),
                time_ratio: ratio(1.4, 1.6),
                extra_seconds_per_iteration: 0.0,
            }),
            (SummaryPrompt, ManyQuestions) => Some(Adjustment {
                recall_ratio: ratio(53.2, 54.2),
                precision_ratio: ratio(88.3, 87.1),
                time_ratio: 1.0,
                extra_seconds_per_iteration: 36.0,
            }),
            (ForcedResponse, ManyQuestions) => Some(Adjustment {
                recall_ratio: ratio(55.7, 63.3),
                precision_ratio: ratio(84.6, 88.8),
                time_ratio: ratio(2.2, 1.6),
                extra_seconds_per_iteration: 0.0,
            }),
            _ => None,
        }
    }
}

/// Multiplicative accuracy and time effects of an interface change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub recall_ratio: f64,
    pub precision_ratio: f64,
    pub time_ratio: f64,
    pub extra_seconds_per_iteration: f64,
}

impl Adjustment {
    pub const IDENTITY: Adjustment = Adjustment {
        recall_ratio: 1.0,
        precision_ratio: 1.0,
        time_ratio: 1.0,
        extra_seconds_per_iteration: 0.0,
    };

    fn then(self, other: Adjustment) -> Adjustment {
        Adjustment {
            recall_ratio: self.recall_ratio * other.recall_ratio,
            precision_ratio: self.precision_ratio * other.precision_ratio,
            time_ratio: self.time_ratio * other.time_ratio,
            extra_seconds_per_iteration: self.extra_seconds_per_iteration
                + other.extra_seconds_per_iteration,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModifierSet {
    #[serde(default)]
    pub positive_bias: bool,
    #[serde(default)]
    pub grouping: bool,
    #[serde(default)]
    pub summary_prompt: bool,
    #[serde(default)]
    pub forced_response: bool,
}

impl ModifierSet {
    pub const NONE: ModifierSet = ModifierSet {
        positive_bias: false,
        grouping: false,
        summary_prompt: false,
        forced_response: false,
    };

    pub fn contains(&self, m: Modifier) -> bool {
        match m {
            Modifier::PositiveBias => self.positive_bias,
            Modifier::Grouping => self.grouping,
            Modifier::SummaryPrompt => self.summary_prompt,
            Modifier::ForcedResponse => self.forced_response,
        }
    }

    pub fn with(mut self, m: Modifier) -> Self {
        match m {
            Modifier::PositiveBias => self.positive_bias = true,
            Modifier::Grouping => self.grouping = true,
            Modifier::SummaryPrompt => self.summary_prompt = true,
            Modifier::ForcedResponse => self.forced_response = true,
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::NONE
    }

    /// Combined effect; modifiers without a measurement in `regime` are
    /// inert.
    pub fn adjustment(&self, regime: Regime) -> Adjustment {
        Modifier::ALL
            .iter()
            .filter(|m| self.contains(**m))
            .filter_map(|m| m.effect(regime))
            .fold(Adjustment::IDENTITY, Adjustment::then)
    }

    /// The modifiers found beneficial in `regime`.
    pub fn recommended(regime: Regime) -> Self {
        match regime {
            Regime::FewQuestions => Self::NONE.with(Modifier::PositiveBias).with(Modifier::Grouping),
            Regime::ManyQuestions => Self::NONE,
        }
    }
}

impl fmt::Display for ModifierSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = Modifier::ALL
            .iter()
            .filter(|m| self.contains(**m))
            .map(|m| m.name())
            .collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

impl FromStr for ModifierSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "none" {
            return Ok(Self::NONE);
        }
        s.split(['+', ','])
            .map(str::trim)
            .try_fold(Self::NONE, |set, name| {
                Modifier::ALL
                    .iter()
                    .find(|m| m.name() == name)
                    .map(|m| set.with(*m))
                    .ok_or_else(|| Error::Unknown {
                        kind: "modifier",
                        id: name.to_string(),
                    })
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: bisection on the precision identity.
    fn solve_fp_rate(r: f64, p: f64, g: f64, q: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let prec = r * g / (r * g + mid * (q - g));
            if prec > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn reference_calibration() {
        let b = WorkerBehavior::reference();
        let f52 = b.fp_rate_at(52);
        assert!((f52 - solve_fp_rate(0.45, 0.864, 3.7, 52.0)).abs() < 1e-12);
        assert!((f52 - 0.00543).abs() < 5e-6, "{f52}");
        let f1 = b.fp_rate_at(1);
        assert!((f1 - solve_fp_rate(0.563, 0.810, 3.7, 52.0)).abs() < 1e-12);
        assert!((b.precision_at(52).unwrap() - 0.864).abs() < 1e-12);
        assert!((b.precision_at(1).unwrap() - 0.810).abs() < 1e-12);
        // linear between the anchors
        let mid = b.recall_at(26);
        assert!((mid - (0.563 + (0.450 - 0.563) * 25.0 / 51.0)).abs() < 1e-12);
        assert!(!b.is_correlated());
    }

    #[test]
    fn calibration_errors() {
        let one = [AccuracyAnchor::reference()[0]];
        assert!(matches!(calibrate(&one, TruthStats::default()), Err(Error::Calibration(_))));
        let mut zero = AccuracyAnchor::reference();
        zero[0].precision = 0.0;
        assert!(calibrate(&zero, TruthStats::default()).is_err());
        let mut out = AccuracyAnchor::reference();
        out[1].recall = 1.2;
        assert!(calibrate(&out, TruthStats::default()).is_err());
        let bad_g = TruthStats {
            mean_positives: 60.0,
            q_top: 52,
        };
        assert!(calibrate(&AccuracyAnchor::reference(), bad_g).is_err());
    }

    #[test]
    fn perfect_precision_means_no_false_positives() {
        let mut a = AccuracyAnchor::reference();
        a[1].precision = 1.0;
        let b = calibrate(&a, TruthStats::default()).unwrap();
        assert_eq!(b.fp_rate_at(52), 0.0);
    }

    #[test]
    fn knee_flattens_few_question_recall() {
        let b = WorkerBehavior::reference().with_knee(7);
        assert_eq!(b.recall_at(5), 0.563);
        assert_eq!(b.recall_at(7), 0.563);
        assert!(b.recall_at(8) < 0.563);
        assert_eq!(b.recall_at(52), 0.450);
    }

    #[test]
    fn modifier_effects() {
        let b = WorkerBehavior::reference();
        let plain = b.apply_modifiers(ModifierSet::NONE, 3);
        assert_eq!(plain.recall, b.recall_at(3));
        assert_eq!(plain.fp_rate, b.fp_rate_at(3));
        assert_eq!(plain.time_ratio, 1.0);

        let pb = b.apply_modifiers(ModifierSet::NONE.with(Modifier::PositiveBias), 3);
        assert!((pb.recall / plain.recall - 57.9 / 53.2).abs() < 1e-12);
        assert!((57.9f64 / 53.2 - 1.088).abs() < 1e-3);
        let p = analytic::precision_identity(pb.recall, pb.fp_rate, 3.7, 52.0).unwrap();
        assert!((p / b.precision_at(3).unwrap() - 81.3 / 79.0).abs() < 1e-9);

        let forced = b.apply_modifiers(ModifierSet::NONE.with(Modifier::ForcedResponse), 52);
        assert!((forced.time_ratio - 1.375).abs() < 1e-12);

        let summary = b.apply_modifiers(ModifierSet::NONE.with(Modifier::SummaryPrompt), 26);
        assert_eq!(summary.extra_seconds_per_iteration, 36.0);

        // positive bias has no measured many-question effect
        let inert = b.apply_modifiers(ModifierSet::NONE.with(Modifier::PositiveBias), 52);
        assert_eq!(inert, b.apply_modifiers(ModifierSet::NONE, 52));
    }

    #[test]
    fn modifier_names_round_trip() {
        for bits in 0..16u8 {
            let set = Modifier::ALL
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .fold(ModifierSet::NONE, |s, (_, m)| s.with(*m));
            assert_eq!(set.to_string().parse::<ModifierSet>().unwrap(), set);
        }
        assert!("sparkles".parse::<ModifierSet>().is_err());
    }

    #[test]
    fn mixture_fit_hits_targets() {
        let b = WorkerBehavior::reference()
            .fit_mixture(52, &[(3, 0.767), (5, 0.853)])
            .unwrap();
        assert!(b.is_correlated());
        let r = b.recall_at(52);
        assert!((b.union_recall(r, 3) - 0.767).abs() < 0.01);
        assert!((b.union_recall(r, 5) - 0.853).abs() < 0.01);
        assert!((b.union_recall(r, 1) - 0.45).abs() < 1e-12);
        assert_eq!(b, WorkerBehavior::reference_correlated());
    }
}
