//! Decision makers: pick `m` of the `k` paused runs from their traces alone.
//!
//! Runs are addressed by their 0-based position in the context. Every
//! ranking breaks ties towards the lowest index, and runs with empty traces
//! rank last for quality-based scores.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::models::{self, ModelSpec};
use crate::rng;
use crate::trace::{ImprovementTrace, Millis, Point, TraceView};

/// What a decider sees at the pause point.
#[derive(Clone, Debug)]
pub struct DecisionContext<'a> {
    /// Run `i` truncated at `b_i`.
    pub views: Vec<TraceView<'a>>,
    pub budgets: Vec<Millis>,
    /// `(T - t1) / m`, computed with `τ = 0`.
    pub horizon_per_run: Millis,
    pub seed: u64,
}

impl<'a> DecisionContext<'a> {
    pub fn new(
        traces: &'a [impl AsRef<ImprovementTrace>],
        budgets: &[Millis],
        horizon_per_run: Millis,
        seed: u64,
    ) -> Self {
        assert_eq!(traces.len(), budgets.len());
        DecisionContext {
            views: traces
                .iter()
                .zip(budgets)
                .map(|(t, &b)| t.as_ref().view(b))
                .collect(),
            budgets: budgets.to_vec(),
            horizon_per_run,
            seed,
        }
    }

    pub fn k(&self) -> usize {
        self.views.len()
    }

    pub fn last_qualities(&self) -> Vec<Option<f64>> {
        self.views.iter().map(TraceView::last_quality).collect()
    }

    /// Time at which run `i` would stop if picked.
    pub fn target_time(&self, i: usize) -> Millis {
        self.budgets[i].saturating_add(self.horizon_per_run)
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DecisionOutcome {
    /// Picked runs, most promising first.
    pub chosen: Vec<usize>,
    /// Charged decision time, filled in by the orchestrator.
    pub tau: Millis,
    /// Predicted final quality per run, for model-based deciders.
    pub predictions: Option<Vec<Option<f64>>>,
    /// Runs whose model could not be fitted and fell back to their last quality.
    pub fallbacks: Vec<usize>,
}

impl DecisionOutcome {
    pub fn new(chosen: Vec<usize>) -> Self {
        DecisionOutcome {
            chosen,
            ..Default::default()
        }
    }
}

fn rank(k: usize, m: usize, cmp: impl Fn(usize, usize) -> Ordering) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| cmp(a, b).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// `m` indices with the smallest keys; absent keys come last.
pub fn pick_lowest(keys: &[Option<f64>], m: usize) -> Vec<usize> {
    rank(keys.len(), m, |a, b| match (keys[a], keys[b]) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    })
}

/// `m` indices with the largest keys; absent keys come first.
pub fn pick_highest_or_absent(keys: &[Option<f64>], m: usize) -> Vec<usize> {
    rank(keys.len(), m, |a, b| match (keys[a], keys[b]) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => Ordering::Equal,
    })
}

/// `m` indices with the largest scores.
pub fn pick_highest(scores: &[f64], m: usize) -> Vec<usize> {
    rank(scores.len(), m, |a, b| scores[b].total_cmp(&scores[a]))
}

pub fn current_best(ctx: &DecisionContext, m: usize) -> DecisionOutcome {
    DecisionOutcome::new(pick_lowest(&ctx.last_qualities(), m))
}

pub fn current_worst(ctx: &DecisionContext, m: usize) -> DecisionOutcome {
    DecisionOutcome::new(pick_highest_or_absent(&ctx.last_qualities(), m))
}

/// Uniform sample without replacement, reproducible from `ctx.seed`.
pub fn random_choice(ctx: &DecisionContext, m: usize) -> DecisionOutcome {
    let mut rng = rng::stream(ctx.seed, &[rng::TAG_DECIDER]);
    DecisionOutcome::new(index::sample(&mut rng, ctx.k(), m).into_vec())
}

/// `|points| / ln(1 + b_i)`.
pub fn most_improvements_score(view: &TraceView, budget: Millis) -> f64 {
    let n = view.len();
    if n == 0 {
        return 0.0;
    }
    n as f64 / (budget as f64).ln_1p()
}

pub fn most_improvements(ctx: &DecisionContext, m: usize) -> DecisionOutcome {
    let scores: Vec<f64> = ctx
        .views
        .iter()
        .zip(&ctx.budgets)
        .map(|(v, &b)| most_improvements_score(v, b))
        .collect();
    DecisionOutcome::new(pick_highest(&scores, m))
}

/// Sum of `ln(time)` over the improvements; `-inf` for an empty trace.
pub fn log_time_sum_score(view: &TraceView) -> f64 {
    if view.is_empty() {
        return f64::NEG_INFINITY;
    }
    view.points().iter().map(|p| (p.time as f64).ln()).sum()
}

pub fn log_time_sum(ctx: &DecisionContext, m: usize) -> DecisionOutcome {
    let scores: Vec<f64> = ctx.views.iter().map(log_time_sum_score).collect();
    DecisionOutcome::new(pick_highest(&scores, m))
}

/// Shrink and slow-down factors estimated from the last three improvements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiminishingReturnsState {
    /// Last improvement in quality.
    pub dq1: f64,
    /// The improvement before it.
    pub dq2: f64,
    pub dt1: Millis,
    pub dt2: Millis,
    /// `min(0.95, dq1 / dq2)`
    pub dq: f64,
    /// `max(1.05, dt1 / dt2)`
    pub dt: f64,
}

pub const MAX_QUALITY_FACTOR: f64 = 0.95;
pub const MIN_TIME_FACTOR: f64 = 1.05;

impl DiminishingReturnsState {
    pub fn from_points(p: [Point; 3]) -> Self {
        let dq1 = p[1].quality - p[2].quality;
        let dq2 = p[0].quality - p[1].quality;
        let dt1 = p[2].time - p[1].time;
        let dt2 = p[1].time - p[0].time;
        DiminishingReturnsState {
            dq1,
            dq2,
            dt1,
            dt2,
            dq: (dq1 / dq2).min(MAX_QUALITY_FACTOR),
            dt: (dt1 as f64 / dt2 as f64).max(MIN_TIME_FACTOR),
        }
    }

    pub fn from_view(view: &TraceView) -> Option<Self> {
        let pts = view.points();
        let n = pts.len();
        (n >= 3).then(|| Self::from_points([pts[n - 3], pts[n - 2], pts[n - 1]]))
    }

    /// Total improvement expected between `last_time` and `until`.
    ///
    /// Each further improvement is `dq` times the previous one and arrives
    /// `dt` times later than the previous gap did. Gaps are rounded up to
    /// whole milliseconds, counted improvements up to whole quality units,
    /// and the forecast stops once an improvement drops below one unit.
    pub fn forecast_gain(&self, last_time: Millis, until: Millis) -> f64 {
        let mut improvement = self.dq1;
        let mut gap = self.dt1 as f64;
        let mut time = last_time;
        let mut gained = 0.0;
        loop {
            improvement *= self.dq;
            gap *= self.dt;
            if improvement < 1.0 || !gap.is_finite() {
                break;
            }
            time = time.saturating_add(gap.ceil() as Millis);
            if time > until {
                break;
            }
            gained += improvement.ceil();
        }
        gained
    }
}

/// Predicted final quality of one run under the diminishing-returns model.
pub fn diminishing_returns_prediction(view: &TraceView, until: Millis) -> Option<f64> {
    let last = view.last()?;
    match DiminishingReturnsState::from_view(view) {
        Some(state) => Some(last.quality - state.forecast_gain(last.time, until)),
        None => Some(last.quality),
    }
}

pub fn diminishing_returns(ctx: &DecisionContext, m: usize) -> DecisionOutcome {
    let predictions: Vec<Option<f64>> = ctx
        .views
        .iter()
        .enumerate()
        .map(|(i, v)| diminishing_returns_prediction(v, ctx.target_time(i)))
        .collect();
    DecisionOutcome {
        chosen: pick_lowest(&predictions, m),
        predictions: Some(predictions),
        ..Default::default()
    }
}

/// Every decision maker, addressable by its identifier string.
#[derive(Clone, Debug, PartialEq)]
pub enum Decider {
    CurrentBest,
    CurrentWorst,
    Random,
    MostImprovements,
    LogTimeSum,
    DiminishingReturns,
    Model(ModelSpec),
}

impl Decider {
    /// Picks `m` runs; `1 <= m <= ctx.k()`.
    pub fn decide(&self, ctx: &DecisionContext, m: usize) -> DecisionOutcome {
        debug_assert!(m >= 1 && m <= ctx.k());
        match self {
            Decider::CurrentBest => current_best(ctx, m),
            Decider::CurrentWorst => current_worst(ctx, m),
            Decider::Random => random_choice(ctx, m),
            Decider::MostImprovements => most_improvements(ctx, m),
            Decider::LogTimeSum => log_time_sum(ctx, m),
            Decider::DiminishingReturns => diminishing_returns(ctx, m),
            Decider::Model(spec) => models::predict_and_select(ctx, spec, m),
        }
    }

    /// The built-in heuristics plus a representative set of model setups.
    pub fn roster() -> Vec<Decider> {
        let mut all = vec![
            Decider::CurrentBest,
            Decider::CurrentWorst,
            Decider::Random,
            Decider::MostImprovements,
            Decider::LogTimeSum,
            Decider::DiminishingReturns,
        ];
        all.extend(ModelSpec::grid().into_iter().map(Decider::Model));
        all
    }
}

impl fmt::Display for Decider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decider::CurrentBest => f.write_str("current-best"),
            Decider::CurrentWorst => f.write_str("current-worst"),
            Decider::Random => f.write_str("random"),
            Decider::MostImprovements => f.write_str("most-improvements"),
            Decider::LogTimeSum => f.write_str("log-time-sum"),
            Decider::DiminishingReturns => f.write_str("diminishing-returns"),
            Decider::Model(spec) => spec.fmt(f),
        }
    }
}

impl FromStr for Decider {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "current-best" => Decider::CurrentBest,
            "current-worst" => Decider::CurrentWorst,
            "random" => Decider::Random,
            "most-improvements" => Decider::MostImprovements,
            "log-time-sum" => Decider::LogTimeSum,
            "diminishing-returns" => Decider::DiminishingReturns,
            _ => Decider::Model(
                s.parse::<ModelSpec>()
                    .map_err(|_| Error::UnknownDecider(s.to_string()))?,
            ),
        })
    }
}
