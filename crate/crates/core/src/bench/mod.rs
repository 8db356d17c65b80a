//! Evaluation methodology: paired sampling, beatability estimates, scores
//! against a single long run, and rank-sum comparisons.
//!
//! Every sample is a set of `k` distinct traces drawn uniformly without
//! replacement from one dataset. Setups with different `k` share samples by
//! taking prefixes of the same draw, so all setups in a comparison see the
//! same runs.

pub mod campaign;
pub mod wilcoxon;

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rayon::prelude::*;

use crate::budget::{luby, replay_sources, run_bet_and_run, BetAndRunResult, BudgetPlan, Preset, RunOptions, Strategy, TauMode};
use crate::deciders::Decider;
use crate::error::{Error, Result};
use crate::rng;
use crate::trace::{ImprovementTrace, Millis, TraceDataset};

pub use campaign::{load_datasets, run_campaign, CampaignConfig, CampaignOutput, VerdictCounts};
pub use wilcoxon::{wilcoxon_rank_sum, Verdict, WilcoxonVerdict};

/// `count` samples of `k` trace indices each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    pub k: usize,
    pub samples: Vec<Vec<usize>>,
}

impl SampleSet {
    /// Sample `s` is drawn from its own stream `(seed, sample-tag, s)`.
    pub fn draw(population: usize, k: usize, count: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > population {
            return Err(Error::Config(format!(
                "cannot draw {k} distinct runs from a dataset of {population}"
            )));
        }
        let samples = (0..count)
            .map(|s| {
                let mut r = rng::stream(seed, &[rng::TAG_SAMPLE, s as u64]);
                index::sample(&mut r, population, k).into_vec()
            })
            .collect();
        Ok(SampleSet { k, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// FNV-1a over every sampled index, in order.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for sample in &self.samples {
            for &i in sample {
                for byte in (i as u64).to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }
}

/// Absent qualities rank after every measured one.
pub fn compare_quality(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// A bet-and-run configuration under evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Setup {
    pub label: String,
    pub plan: BudgetPlan,
    pub decider: Decider,
}

impl Setup {
    pub fn new(plan: BudgetPlan, decider: Decider) -> Self {
        let label = format!(
            "{decider}@T{}/t1-{}/k{}/m{}/{}",
            plan.total, plan.init, plan.k, plan.m, plan.strategy
        );
        Setup {
            label,
            plan,
            decider,
        }
    }

    pub fn preset(preset: Preset, total: Millis) -> Result<Self> {
        let (plan, decider) = preset.plan(total)?;
        Ok(Setup {
            label: format!("{preset}@T{total}"),
            plan,
            decider,
        })
    }

    /// Runs this setup on the first `k` traces of `sample`.
    pub fn run_on(
        &self,
        dataset: &TraceDataset,
        sample: &[usize],
        seed: u64,
        tau: TauMode,
    ) -> Result<BetAndRunResult> {
        let traces: Vec<Arc<ImprovementTrace>> = sample[..self.plan.k]
            .iter()
            .map(|&i| Arc::clone(&dataset.traces[i]))
            .collect();
        run_bet_and_run(
            &self.plan,
            replay_sources(&traces, dataset.run_budget),
            &self.decider,
            RunOptions { tau, seed },
        )
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Seed handed to the decider on sample `s`.
pub fn sample_seed(seed: u64, s: usize) -> u64 {
    rng::derive_seed(seed, &[rng::TAG_DECIDER, s as u64])
}

/// Runs `setup` on every sample; results are in sample order.
pub fn evaluate(
    dataset: &TraceDataset,
    setup: &Setup,
    samples: &SampleSet,
    seed: u64,
    tau: TauMode,
) -> Result<Vec<BetAndRunResult>> {
    if setup.plan.k > samples.k {
        return Err(Error::Config(format!(
            "setup {} needs {} runs per sample, samples hold {}",
            setup.label, setup.plan.k, samples.k
        )));
    }
    samples
        .samples
        .par_iter()
        .enumerate()
        .map(|(s, sample)| setup.run_on(dataset, sample, sample_seed(seed, s), tau))
        .collect()
}

/// Final qualities with absent results mapped to `+∞`, ready for ranking.
pub fn final_qualities(results: &[BetAndRunResult]) -> Vec<f64> {
    results
        .iter()
        .map(|r| r.final_quality.unwrap_or(f64::INFINITY))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScoreCounts {
    /// Samples where the setup beat the baseline.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

impl ScoreCounts {
    pub fn samples(&self) -> usize {
        self.wins + self.losses + self.ties
    }

    /// `-1` per win, `+1` per loss, averaged; lower is better.
    pub fn score(&self) -> f64 {
        if self.samples() == 0 {
            return 0.0;
        }
        (self.losses as f64 - self.wins as f64) / self.samples() as f64
    }

    pub fn record(&mut self, setup: Option<f64>, baseline: Option<f64>) {
        match compare_quality(setup, baseline) {
            Ordering::Less => self.wins += 1,
            Ordering::Greater => self.losses += 1,
            Ordering::Equal => self.ties += 1,
        }
    }
}

/// One row of a score report.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub instance: String,
    pub setup: String,
    pub counts: ScoreCounts,
    pub mean_final: f64,
    pub mean_gap: f64,
    pub sample_checksum: u64,
}

/// Scores per (instance, setup) plus the per-setup mean over instances.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreReport {
    pub rows: Vec<ScoreRow>,
}

impl ScoreReport {
    /// `(setup, mean score over instances)` in first-seen order.
    pub fn setup_means(&self) -> Vec<(String, f64)> {
        let mut order: Vec<String> = Vec::new();
        for row in &self.rows {
            if !order.contains(&row.setup) {
                order.push(row.setup.clone());
            }
        }
        order
            .into_iter()
            .map(|setup| {
                let scores: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.setup == setup)
                    .map(|r| r.counts.score())
                    .collect();
                let mean = scores.iter().sum::<f64>() / scores.len() as f64;
                (setup, mean)
            })
            .collect()
    }
}

/// Baseline for sample `sample`: its first trace run for the whole budget.
pub fn single_run_baseline(dataset: &TraceDataset, sample: &[usize], total: Millis) -> Option<f64> {
    dataset.traces[sample[0]].final_quality(total)
}

/// Scores already evaluated results against the single-run baseline.
pub fn score_results(
    dataset: &TraceDataset,
    setup: &Setup,
    samples: &SampleSet,
    results: &[BetAndRunResult],
) -> ScoreRow {
    let mut counts = ScoreCounts::default();
    let mut finals = Vec::new();
    for (sample, result) in samples.samples.iter().zip(results) {
        counts.record(
            result.final_quality,
            single_run_baseline(dataset, sample, setup.plan.total),
        );
        if let Some(q) = result.final_quality {
            finals.push(q);
        }
    }
    let mean_final = if finals.is_empty() {
        f64::NAN
    } else {
        finals.iter().sum::<f64>() / finals.len() as f64
    };
    ScoreRow {
        instance: dataset.instance_name.clone(),
        setup: setup.label.clone(),
        counts,
        mean_final,
        mean_gap: dataset.gap(mean_final),
        sample_checksum: samples.checksum(),
    }
}

/// Scores every setup against the single-run baseline on shared samples.
pub fn score_against_single_run(
    dataset: &TraceDataset,
    setups: &[Setup],
    samples: usize,
    seed: u64,
    tau: TauMode,
) -> Result<ScoreReport> {
    let k = setups.iter().map(|s| s.plan.k).max().unwrap_or(1);
    let set = SampleSet::draw(dataset.len(), k, samples, seed)?;
    let mut rows = Vec::with_capacity(setups.len());
    for setup in setups {
        let results = evaluate(dataset, setup, &set, seed, tau)?;
        rows.push(score_results(dataset, setup, &set, &results));
    }
    Ok(ScoreReport { rows })
}

/// Per-instance probability that the current-best pick at `t1/k` is beaten
/// by another run of its sample once every run is granted `T - t1 + t1/k`.
/// This grants each unpicked run the whole remaining budget, so it bounds
/// what any decider could gain rather than describing a runnable strategy.
#[derive(Clone, Debug, PartialEq)]
pub struct BeatabilityReport {
    pub per_instance: Vec<(String, f64)>,
}

impl BeatabilityReport {
    pub fn instances_beatable(&self) -> usize {
        self.per_instance.iter().filter(|(_, p)| *p > 0.0).count()
    }

    pub fn mean(&self) -> f64 {
        if self.per_instance.is_empty() {
            return 0.0;
        }
        self.per_instance.iter().map(|(_, p)| p).sum::<f64>() / self.per_instance.len() as f64
    }
}

/// Whether the current-best pick of `traces` at `b` is strictly beaten at
/// `horizon`.
pub fn is_beatable(traces: &[&ImprovementTrace], b: Millis, horizon: Millis) -> bool {
    let mut pick = 0;
    for i in 1..traces.len() {
        if compare_quality(traces[i].final_quality(b), traces[pick].final_quality(b)) == Ordering::Less {
            pick = i;
        }
    }
    let target = traces[pick].final_quality(horizon);
    traces.iter().enumerate().any(|(i, t)| {
        i != pick && compare_quality(t.final_quality(horizon), target) == Ordering::Less
    })
}

pub fn estimate_beatability(
    dataset: &TraceDataset,
    total: Millis,
    init: Millis,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if init > total || k == 0 {
        return Err(Error::Config(format!("need 0 <= t1 <= T and k >= 1, got t1 = {init}, T = {total}, k = {k}")));
    }
    let set = SampleSet::draw(dataset.len(), k, samples, seed)?;
    let b = init / k as u64;
    let horizon = total - init + b;
    let beatable = set
        .samples
        .par_iter()
        .filter(|sample| {
            let traces: Vec<&ImprovementTrace> = sample.iter().map(|&i| dataset.traces[i].as_ref()).collect();
            is_beatable(&traces, b, horizon)
        })
        .count();
    Ok(if samples == 0 { 0.0 } else { beatable as f64 / samples as f64 })
}

pub fn beatability_report(
    datasets: &[TraceDataset],
    total: Millis,
    init: Millis,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<BeatabilityReport> {
    let per_instance = datasets
        .iter()
        .map(|d| Ok((d.instance_name.clone(), estimate_beatability(d, total, init, k, samples, seed)?)))
        .collect::<Result<_>>()?;
    Ok(BeatabilityReport { per_instance })
}

/// Verdict of one challenger against the F17 preset on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct F17Comparison {
    pub instance: String,
    pub challenger: String,
    pub verdict: WilcoxonVerdict,
}

/// Runs the F17 preset and every challenger on shared samples and compares
/// each challenger's final qualities against F17's.
pub fn compare_to_f17(
    dataset: &TraceDataset,
    total: Millis,
    challengers: &[Setup],
    samples: usize,
    seed: u64,
    tau: TauMode,
) -> Result<Vec<F17Comparison>> {
    let reference = Setup::preset(Preset::F17, total)?;
    let k = challengers
        .iter()
        .map(|s| s.plan.k)
        .chain([reference.plan.k])
        .max()
        .expect("reference present");
    let set = SampleSet::draw(dataset.len(), k, samples, seed)?;
    let base = final_qualities(&evaluate(dataset, &reference, &set, seed, tau)?);
    challengers
        .iter()
        .map(|c| {
            let finals = final_qualities(&evaluate(dataset, c, &set, seed, tau)?);
            Ok(F17Comparison {
                instance: dataset.instance_name.clone(),
                challenger: c.label.clone(),
                verdict: wilcoxon_rank_sum(&finals, &base),
            })
        })
        .collect()
}

/// Smallest `t1` (a multiple of the plan's unit) that gives every run of every
/// probe sample at least one measured point within its `b_i`; `None` when no
/// `t1 <= T` does.
pub fn smallest_informative_t1(
    dataset: &TraceDataset,
    total: Millis,
    k: usize,
    strategy: Strategy,
    probe_samples: usize,
    seed: u64,
) -> Result<Option<Millis>> {
    let probe = BudgetPlan::new(total, 0, k, 1, strategy)?;
    let unit = probe.unit();
    let set = SampleSet::draw(dataset.len(), k, probe_samples, seed)?;
    let mut need: u64 = 0;
    for sample in &set.samples {
        for (pos, &i) in sample.iter().enumerate() {
            let Some(first) = dataset.traces[i].points().first() else {
                return Ok(None);
            };
            // b_i = t1 * w_i / unit, so t1 >= first * unit / w_i
            let weight = match strategy {
                Strategy::Even => 1,
                Strategy::Luby => luby(pos as u64 + 1),
            };
            let steps = first.time.div_ceil(weight);
            need = need.max(steps.saturating_mul(unit));
        }
    }
    Ok((need <= total).then_some(need))
}
