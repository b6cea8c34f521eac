//! Task-time model, HIT packing arithmetic and campaign cost totals.
//!
//! Per-video task time is linear in the number of questions shown:
//! `seconds = base + per_question * Q`. The base term is the time spent
//! watching the video (at double speed) and is scaled proportionally for
//! videos of other lengths.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean length of the videos the reference time model was fitted on.
pub const REFERENCE_VIDEO_SECONDS: f64 = 30.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    /// Watching overhead in seconds.
    pub a: f64,
    /// Seconds per question answered.
    pub b: f64,
}

impl Default for TimeModel {
    fn default() -> Self {
        Self { a: 14.1, b: 1.15 }
    }
}

impl TimeModel {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::out_of_range("a", a, "finite, >= 0"));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::out_of_range("b", b, "finite, >= 0"));
        }
        Ok(Self { a, b })
    }

    /// Seconds to answer `q` questions about one video.
    pub fn task_time(&self, q: usize) -> Result<f64> {
        if q == 0 {
            return Err(Error::out_of_range("Q", q, ">= 1"));
        }
        Ok(self.task_seconds(q))
    }

    pub(crate) fn task_seconds(&self, q: usize) -> f64 {
        self.a + self.b * q as f64
    }

    /// Seconds for one complete pass over `q_top` questions asked `k` at a
    /// time, the last task holding the remainder.
    pub fn iteration_time(&self, k: usize, q_top: usize) -> Result<f64> {
        if k == 0 || k > q_top {
            return Err(Error::out_of_range("k", k, format!("1..={q_top}")));
        }
        let full = q_top / k;
        let rest = q_top % k;
        let mut total = full as f64 * self.task_seconds(k);
        if rest > 0 {
            total += self.task_seconds(rest);
        }
        Ok(total)
    }

    /// Videos of a `k`-question task that fit in one HIT, at least one.
    pub fn videos_per_hit(&self, k: usize, budget: &HitBudget) -> usize {
        videos_for(self.task_seconds(k.max(1)), budget.target_seconds)
    }

    /// The same model for videos of a different length: the watch term scales
    /// with duration and the per-question term is unchanged.
    pub fn for_video_length(&self, video_seconds: f64) -> Self {
        Self {
            a: self.a * (video_seconds.max(0.0) / REFERENCE_VIDEO_SECONDS),
            b: self.b,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            a: self.a * factor,
            b: self.b * factor,
        }
    }

    pub fn campaign_cost(
        &self,
        videos: usize,
        k: usize,
        iterations: usize,
        q_top: usize,
        budget: &HitBudget,
    ) -> Result<CampaignCost> {
        if videos == 0 {
            return Err(Error::out_of_range("M", videos, ">= 1"));
        }
        if iterations == 0 {
            return Err(Error::out_of_range("n", iterations, ">= 1"));
        }
        let per_pass = self.iteration_time(k, q_top)?;
        let tasks = q_top.div_ceil(k);
        let per_hit = self.videos_per_hit(k, budget);
        let hits = iterations * tasks * videos.div_ceil(per_hit);
        Ok(CampaignCost {
            hits,
            dollars: hits as f64 * budget.pay_per_hit,
            worker_hours: (iterations * videos) as f64 * per_pass / 3600.0,
        })
    }
}

pub(crate) fn videos_for(task_seconds: f64, target_seconds: f64) -> usize {
    if task_seconds <= 0.0 {
        return 1;
    }
    ((target_seconds / task_seconds).floor() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitBudget {
    pub target_seconds: f64,
    /// USD per HIT.
    pub pay_per_hit: f64,
}

impl Default for HitBudget {
    fn default() -> Self {
        Self {
            target_seconds: 150.0,
            pay_per_hit: 0.40,
        }
    }
}

impl HitBudget {
    pub fn new(target_seconds: f64, pay_per_hit: f64) -> Result<Self> {
        if !(target_seconds > 0.0 && target_seconds.is_finite()) {
            return Err(Error::out_of_range("target_seconds", target_seconds, "> 0"));
        }
        Ok(Self {
            target_seconds,
            pay_per_hit,
        })
    }

    /// Implied hourly wage when HITs take exactly the target time.
    pub fn hourly_wage(&self) -> f64 {
        self.pay_per_hit * 3600.0 / self.target_seconds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignCost {
    pub hits: usize,
    pub dollars: f64,
    pub worker_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingObservation {
    pub questions: usize,
    pub seconds: f64,
    #[serde(default = "reference_length")]
    pub video_seconds: f64,
}

fn reference_length() -> f64 {
    REFERENCE_VIDEO_SECONDS
}

#[derive(Deserialize)]
struct TimingRow {
    questions: usize,
    seconds: f64,
    video_seconds: Option<f64>,
}

/// Reads `questions,seconds,video_seconds` rows; the last column may be empty.
pub fn read_timing_csv(reader: impl Read) -> Result<Vec<TimingObservation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TimingRow>().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::Row {
            line,
            message: e.to_string(),
        })?;
        if row.questions == 0 || !(row.seconds > 0.0) {
            return Err(Error::Row {
                line,
                message: "questions must be >= 1 and seconds > 0".into(),
            });
        }
        out.push(TimingObservation {
            questions: row.questions,
            seconds: row.seconds,
            video_seconds: row.video_seconds.unwrap_or(REFERENCE_VIDEO_SECONDS),
        });
    }
    Ok(out)
}

/// Ordinary least squares of seconds on question count.
pub fn fit_time_model(obs: &[TimingObservation]) -> Result<TimeModel> {
    if obs.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 timing observations, got {}",
            obs.len()
        )));
    }
    let n = obs.len() as f64;
    let mean_q = obs.iter().map(|o| o.questions as f64).sum::<f64>() / n;
    let mean_t = obs.iter().map(|o| o.seconds).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for o in obs {
        let dq = o.questions as f64 - mean_q;
        sxy += dq * (o.seconds - mean_t);
        sxx += dq * dq;
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate(
            "all observations share one question count".into(),
        ));
    }
    let b = sxy / sxx;
    let a = mean_t - b * mean_q;
    // Noise can push a coefficient marginally negative; the model is only
    // meaningful on the non-negative orthant.
    Ok(TimeModel {
        a: a.max(0.0),
        b: b.max(0.0),
    })
}

/// Observed per-video iteration time at one interface size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedIteration {
    pub k: usize,
    pub minutes: f64,
}

/// Per-video iteration time in minutes, from the linear model corrected by
/// observed iteration times where available.
///
/// At an observed `k` the observed value is returned exactly. Between
/// observations the observed/predicted ratio is interpolated linearly in `k`
/// and held constant outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationClock {
    pub model: TimeModel,
    pub q_top: usize,
    #[serde(default)]
    pub observed: Vec<ObservedIteration>,
}

/// Which estimate an iteration time came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSource {
    Model,
    Observed,
    Interpolated,
}

impl IterationClock {
    pub fn model_only(model: TimeModel, q_top: usize) -> Self {
        Self {
            model,
            q_top,
            observed: Vec::new(),
        }
    }

    pub fn with_observed(model: TimeModel, q_top: usize, mut observed: Vec<ObservedIteration>) -> Self {
        observed.sort_by_key(|o| o.k);
        observed.dedup_by_key(|o| o.k);
        Self {
            model,
            q_top,
            observed,
        }
    }

    pub fn predicted_minutes(&self, k: usize) -> Result<f64> {
        Ok(self.model.iteration_time(k, self.q_top)? / 60.0)
    }

    /// Multiplier applied to the model's prediction at interface size `k`.
    pub fn correction(&self, k: usize) -> Result<(f64, TimeSource)> {
        let ratios = self
            .observed
            .iter()
            .filter(|o| o.k >= 1 && o.k <= self.q_top)
            .map(|o| Ok((o.k, o.minutes / self.predicted_minutes(o.k)?)))
            .collect::<Result<Vec<_>>>()?;
        let Some(&(k0, r0)) = ratios.first() else {
            return Ok((1.0, TimeSource::Model));
        };
        if let Some(&(_, r)) = ratios.iter().find(|(ko, _)| *ko == k) {
            return Ok((r, TimeSource::Observed));
        }
        if k <= k0 {
            return Ok((r0, TimeSource::Interpolated));
        }
        let &(kn, rn) = ratios.last().expect("non-empty");
        if k >= kn {
            return Ok((rn, TimeSource::Interpolated));
        }
        let hi = ratios.iter().position(|(ko, _)| *ko > k).expect("k inside range");
        let (ka, ra) = ratios[hi - 1];
        let (kb, rb) = ratios[hi];
        let w = (k - ka) as f64 / (kb - ka) as f64;
        Ok((ra + w * (rb - ra), TimeSource::Interpolated))
    }

    pub fn iteration_minutes(&self, k: usize) -> Result<(f64, TimeSource)> {
        let predicted = self.predicted_minutes(k)?;
        let (c, source) = self.correction(k)?;
        Ok((predicted * c, source))
    }

    /// Same clock for videos of another length (watch term scaled).
    pub fn for_video_length(&self, video_seconds: f64) -> Self {
        Self {
            model: self.model.for_video_length(video_seconds),
            q_top: self.q_top,
            observed: self
                .observed
                .iter()
                .map(|o| {
                    let scale = self
                        .model
                        .for_video_length(video_seconds)
                        .iteration_time(o.k, self.q_top)
                        .unwrap_or(0.0)
                        / self.model.iteration_time(o.k, self.q_top).unwrap_or(1.0);
                    ObservedIteration {
                        k: o.k,
                        minutes: o.minutes * scale,
                    }
                })
                .collect(),
        }
    }

    /// Every time quantity multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            model: self.model.scaled(factor),
            q_top: self.q_top,
            observed: self
                .observed
                .iter()
                .map(|o| ObservedIteration {
                    k: o.k,
                    minutes: o.minutes * factor,
                })
                .collect(),
        }
    }
}
