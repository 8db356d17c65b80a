//! Budget arithmetic and the three-phase bet-and-run orchestration.
//!
//! A total budget `T` is split into an initialisation budget `t1` shared by
//! `k` runs, the decision time `τ`, and a continuation budget
//! `t2 = T - t1 - τ` shared by the `m` runs the decider picks.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::deciders::{DecisionContext, DecisionOutcome, Decider};
use crate::error::{Error, Result};
use crate::trace::{ImprovementTrace, Millis, TraceView};

/// The `i`-th term (1-based) of the Luby sequence `1,1,2,1,1,2,4,1,1,2,...`.
///
/// `l(i) = 2^(z-1)` when `i = 2^z - 1`, otherwise `l(i - 2^(z-1) + 1)` for the
/// `z` with `2^(z-1) <= i < 2^z - 1`.
///
/// # Panics
///
/// Panics when `i == 0`.
pub fn luby(i: u64) -> u64 {
    assert!(i >= 1, "the Luby sequence is 1-based");
    let mut i = i as u128;
    loop {
        let z = 128 - i.leading_zeros();
        if i == (1u128 << z) - 1 {
            return 1u64 << (z - 1);
        }
        i = i - (1u128 << (z - 1)) + 1;
    }
}

/// `l(1) + ... + l(k)`.
pub fn luby_sum(k: usize) -> u64 {
    (1..=k as u64).map(luby).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    #[default]
    Even,
    Luby,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Even => "even",
            Strategy::Luby => "luby",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "even" => Ok(Strategy::Even),
            "luby" => Ok(Strategy::Luby),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BudgetPlan {
    /// `T`
    pub total: Millis,
    /// `t1`
    pub init: Millis,
    pub k: usize,
    pub m: usize,
    pub strategy: Strategy,
}

impl BudgetPlan {
    pub fn new(total: Millis, init: Millis, k: usize, m: usize, strategy: Strategy) -> Result<Self> {
        let plan = BudgetPlan {
            total,
            init,
            k,
            m,
            strategy,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.m == 0 || self.m > self.k {
            return Err(Error::Config(format!(
                "m must lie in 1..={}, got {}",
                self.k, self.m
            )));
        }
        if self.init > self.total {
            return Err(Error::Config(format!(
                "t1 = {} exceeds T = {}",
                self.init, self.total
            )));
        }
        let unit = self.unit();
        if !self.init.is_multiple_of(unit) {
            return Err(Error::Config(format!(
                "t1 = {} must be a multiple of {} for strategy {}",
                self.init, unit, self.strategy
            )));
        }
        Ok(())
    }

    /// The granularity `t1` must be a multiple of.
    pub fn unit(&self) -> u64 {
        match self.strategy {
            Strategy::Even => self.k as u64,
            Strategy::Luby => luby_sum(self.k),
        }
    }

    /// Per-run initial budgets `b_i`.
    pub fn allocate(&self) -> Result<BudgetAllocation> {
        self.validate()?;
        let per_run = match self.strategy {
            Strategy::Even => vec![self.init / self.k as u64; self.k],
            Strategy::Luby => {
                let scale = self.init / luby_sum(self.k);
                (1..=self.k as u64).map(|i| luby(i) * scale).collect()
            }
        };
        Ok(BudgetAllocation { per_run })
    }

    /// Continuation budget per picked run assuming `τ = 0`.
    pub fn horizon_per_run(&self) -> Millis {
        (self.total - self.init) / self.m as u64
    }
}

impl fmt::Display for BudgetPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "T={} t1={} k={} m={} {}",
            self.total, self.init, self.k, self.m, self.strategy
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BudgetAllocation {
    pub per_run: Vec<Millis>,
}

impl BudgetAllocation {
    pub fn total(&self) -> Millis {
        self.per_run.iter().sum()
    }
}

/// Named configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// One run over the whole budget.
    Single,
    /// `k` independent runs, no continuation.
    Restarts(usize),
    /// `k` independent runs with Luby-distributed lengths.
    LubyRestarts(usize),
    /// `k = 40`, `m = 1`, `t1 = 0.4 T`, even split, current-best.
    F17,
}

impl Preset {
    /// Expands the preset for a total budget. `t1` is rounded down to the
    /// nearest admissible multiple when `T` does not divide evenly.
    pub fn plan(&self, total: Millis) -> Result<(BudgetPlan, Decider)> {
        let round_down = |x: Millis, unit: u64| x - x % unit;
        let plan = match *self {
            Preset::Single => BudgetPlan::new(total, 0, 1, 1, Strategy::Even)?,
            Preset::Restarts(k) => {
                if k == 0 {
                    return Err(Error::Config("restarts needs k >= 1".into()));
                }
                BudgetPlan::new(total, round_down(total, k as u64), k, 1, Strategy::Even)?
            }
            Preset::LubyRestarts(k) => {
                if k == 0 {
                    return Err(Error::Config("luby_restarts needs k >= 1".into()));
                }
                let init = round_down(total, luby_sum(k));
                BudgetPlan::new(total, init, k, 1, Strategy::Luby)?
            }
            Preset::F17 => {
                let init = round_down(total * 2 / 5, 40);
                BudgetPlan::new(total, init, 40, 1, Strategy::Even)?
            }
        };
        Ok((plan, Decider::CurrentBest))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Single => f.write_str("single"),
            Preset::Restarts(k) => write!(f, "restarts({k})"),
            Preset::LubyRestarts(k) => write!(f, "luby_restarts({k})"),
            Preset::F17 => f.write_str("f17"),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    /// Accepts `single`, `f17`, `restarts(k)`, `luby_restarts(k)`; `:k` or
    /// `-k` may replace the parentheses and `-` may replace `_`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        let unknown = || Error::UnknownPreset(s.clone());
        match s.as_str() {
            "single" => return Ok(Preset::Single),
            "f17" => return Ok(Preset::F17),
            _ => {}
        }
        let (name, arg) = if let Some(rest) = s.strip_suffix(')') {
            rest.split_once('(').ok_or_else(unknown)?
        } else if let Some(pair) = s.split_once(':') {
            pair
        } else {
            s.rsplit_once('-').ok_or_else(unknown)?
        };
        let k: usize = arg.parse().map_err(|_| unknown())?;
        match name {
            "restarts" => Ok(Preset::Restarts(k)),
            "luby-restarts" => Ok(Preset::LubyRestarts(k)),
            _ => Err(unknown()),
        }
    }
}

/// How the decision time `τ` is charged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TauMode {
    /// Observed wall time of the decider, rounded up to whole milliseconds.
    #[default]
    Measured,
    /// `τ = 0`.
    Zero,
}

impl fmt::Display for TauMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TauMode::Measured => "measured",
            TauMode::Zero => "zero",
        })
    }
}

impl FromStr for TauMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "measured" => Ok(TauMode::Measured),
            "zero" => Ok(TauMode::Zero),
            other => Err(Error::Config(format!("unknown tau mode `{other}`"))),
        }
    }
}

/// A run that can be started, paused and resumed under a time budget.
pub trait RunSource: Send {
    fn run_id(&self) -> &str;

    /// Time consumed so far.
    fn consumed(&self) -> Millis;

    /// Resumes the run until it has consumed `until` milliseconds in total.
    /// Never moves backwards.
    fn advance(&mut self, until: Millis);

    /// Everything recorded up to the consumed time.
    fn view(&self) -> TraceView<'_>;

    /// True when the run was asked to go beyond what its source can supply.
    fn exhausted(&self) -> bool {
        false
    }
}

/// Replays a recorded trace in virtual time.
#[derive(Clone, Debug)]
pub struct ReplayRun {
    trace: Arc<ImprovementTrace>,
    consumed: Millis,
    recorded_budget: Option<Millis>,
}

impl ReplayRun {
    pub fn new(trace: Arc<ImprovementTrace>) -> Self {
        ReplayRun {
            trace,
            consumed: 0,
            recorded_budget: None,
        }
    }

    /// Marks how long the recording ran; continuing past it is flagged.
    pub fn with_recorded_budget(mut self, budget: Option<Millis>) -> Self {
        self.recorded_budget = budget;
        self
    }
}

impl RunSource for ReplayRun {
    fn run_id(&self) -> &str {
        self.trace.run_id()
    }

    fn consumed(&self) -> Millis {
        self.consumed
    }

    fn advance(&mut self, until: Millis) {
        self.consumed = self.consumed.max(until);
    }

    fn view(&self) -> TraceView<'_> {
        self.trace.view(self.consumed)
    }

    fn exhausted(&self) -> bool {
        self.recorded_budget.is_some_and(|b| self.consumed > b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunState {
    Running,
    Paused,
    Terminated,
}

/// Orchestrator-side bookkeeping around a [`RunSource`].
pub struct RunHandle {
    source: Box<dyn RunSource>,
    state: RunState,
}

impl RunHandle {
    pub fn new(source: Box<dyn RunSource>) -> Self {
        RunHandle {
            source,
            state: RunState::Paused,
        }
    }

    pub fn state(&self) -> RunState {
        self.state
    }

    pub fn source(&self) -> &dyn RunSource {
        self.source.as_ref()
    }

    /// Runs until `until` total milliseconds, then pauses.
    pub fn run_until(&mut self, until: Millis) {
        assert_ne!(self.state, RunState::Terminated, "resuming a terminated run");
        self.state = RunState::Running;
        self.source.advance(until);
        self.state = RunState::Paused;
    }

    pub fn terminate(&mut self) {
        self.state = RunState::Terminated;
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub tau: TauMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetAndRunResult {
    /// Best quality among the continued runs, absent if none measured anything.
    pub final_quality: Option<f64>,
    /// 0-based index of the run that produced `final_quality`.
    pub winner: Option<usize>,
    pub winner_run_id: Option<String>,
    pub init_budget: Millis,
    pub tau: Millis,
    /// Continuation budget actually distributed.
    pub continuation: Millis,
    pub allocation: Vec<Millis>,
    pub decision: DecisionOutcome,
    /// Quality of every run at the time it stopped.
    pub per_run_final: Vec<Option<f64>>,
    /// Time consumed by every run.
    pub per_run_consumed: Vec<Millis>,
    /// `T - t1 - τ` was negative and the continuation was clamped to zero.
    pub continuation_clamped: bool,
    /// Continued runs whose source ran out before their extended horizon.
    pub exhausted_runs: Vec<usize>,
}

fn checked_outcome(outcome: &DecisionOutcome, k: usize, m: usize) -> Result<()> {
    let mut seen = vec![false; k];
    let ok = outcome.chosen.len() == m
        && outcome.chosen.iter().all(|&i| {
            i < k && !std::mem::replace(&mut seen[i], true)
        });
    if ok {
        Ok(())
    } else {
        Err(Error::BadDecision {
            got: outcome.chosen.len(),
            expected: m,
            k,
        })
    }
}

/// Executes one bet-and-run over `runs` (which must hold exactly `k` sources).
///
/// Phase 1 runs source `i` for `b_i`. Phase 2 asks `decider` for `m` runs and
/// charges `τ` per [`TauMode`]. Phase 3 continues each pick for `t2 / m`; the
/// `t2 mod m` leftover goes to the pick with the best predicted (or current)
/// quality. With replay sources and [`TauMode::Zero`] the result is a pure
/// function of the inputs.
pub fn run_bet_and_run(
    plan: &BudgetPlan,
    runs: Vec<Box<dyn RunSource>>,
    decider: &Decider,
    options: RunOptions,
) -> Result<BetAndRunResult> {
    let allocation = plan.allocate()?;
    if runs.len() != plan.k {
        return Err(Error::Config(format!(
            "plan expects {} runs, got {}",
            plan.k,
            runs.len()
        )));
    }
    let mut handles: Vec<RunHandle> = runs.into_iter().map(RunHandle::new).collect();

    // Phase 1
    handles
        .par_iter_mut()
        .zip(allocation.per_run.par_iter())
        .for_each(|(h, &b)| h.run_until(b));

    // Phase 2
    let started = Instant::now();
    let mut decision = {
        let ctx = DecisionContext {
            views: handles.iter().map(|h| h.source().view()).collect(),
            budgets: allocation.per_run.clone(),
            horizon_per_run: plan.horizon_per_run(),
            seed: options.seed,
        };
        decider.decide(&ctx, plan.m)
    };
    let elapsed = started.elapsed();
    checked_outcome(&decision, plan.k, plan.m)?;
    let tau = match options.tau {
        TauMode::Zero => 0,
        TauMode::Measured => elapsed.as_nanos().div_ceil(1_000_000) as Millis,
    };
    decision.tau = tau;

    // Phase 3
    let remaining = plan.total as i128 - plan.init as i128 - tau as i128;
    let continuation_clamped = remaining < 0;
    let t2 = remaining.max(0) as Millis;
    let share = t2 / plan.m as u64;
    let extra = t2 % plan.m as u64;
    let favourite = presumed_winner(&decision, &handles);
    let mut targets: Vec<Option<Millis>> = vec![None; plan.k];
    for &i in &decision.chosen {
        let bonus = if i == favourite { extra } else { 0 };
        targets[i] = Some(allocation.per_run[i] + share + bonus);
    }
    handles
        .par_iter_mut()
        .zip(targets.par_iter())
        .for_each(|(h, target)| match target {
            Some(t) => h.run_until(*t),
            None => h.terminate(),
        });

    let per_run_final: Vec<Option<f64>> = handles
        .iter()
        .map(|h| h.source().view().last_quality())
        .collect();
    let per_run_consumed = handles.iter().map(|h| h.source().consumed()).collect();

    let mut winner: Option<usize> = None;
    for &i in &decision.chosen {
        if let Some(q) = per_run_final[i] {
            let better = match winner {
                None => true,
                Some(w) => {
                    let wq = per_run_final[w].expect("winner has a quality");
                    q < wq || (q == wq && i < w)
                }
            };
            if better {
                winner = Some(i);
            }
        }
    }
    let mut exhausted_runs: Vec<usize> = decision
        .chosen
        .iter()
        .copied()
        .filter(|&i| handles[i].source().exhausted())
        .collect();
    exhausted_runs.sort_unstable();

    Ok(BetAndRunResult {
        final_quality: winner.and_then(|w| per_run_final[w]),
        winner,
        winner_run_id: winner.map(|w| handles[w].source().run_id().to_string()),
        init_budget: plan.init,
        tau,
        continuation: t2,
        allocation: allocation.per_run,
        decision,
        per_run_final,
        per_run_consumed,
        continuation_clamped,
        exhausted_runs,
    })
}

/// The pick with the best predicted quality, or best current quality when the
/// decider made no predictions; lowest index on ties.
fn presumed_winner(decision: &DecisionOutcome, handles: &[RunHandle]) -> usize {
    let key = |i: usize| -> Option<f64> {
        decision
            .predictions
            .as_ref()
            .and_then(|p| p[i])
            .or_else(|| handles[i].source().view().last_quality())
    };
    let mut best = decision.chosen[0];
    for &i in &decision.chosen[1..] {
        let better = match (key(i), key(best)) {
            (Some(a), Some(b)) => a < b || (a == b && i < best),
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => i < best,
        };
        if better {
            best = i;
        }
    }
    best
}

/// Replay sources over a sample of traces.
pub fn replay_sources(
    traces: &[Arc<ImprovementTrace>],
    recorded_budget: Option<Millis>,
) -> Vec<Box<dyn RunSource>> {
    traces
        .iter()
        .map(|t| {
            Box::new(ReplayRun::new(Arc::clone(t)).with_recorded_budget(recorded_budget))
                as Box<dyn RunSource>
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn luby_oracle(i: u64, memo: &mut HashMap<u64, u64>) -> u64 {
        if let Some(&v) = memo.get(&i) {
            return v;
        }
        let mut z = 1;
        while (1u64 << z) - 1 < i {
            z += 1;
        }
        let v = if i == (1u64 << z) - 1 {
            1 << (z - 1)
        } else {
            luby_oracle(i - (1 << (z - 1)) + 1, memo)
        };
        memo.insert(i, v);
        v
    }

    #[test]
    fn luby_prefix() {
        let got: Vec<u64> = (1..=15).map(luby).collect();
        assert_eq!(got, [1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
        assert_eq!(luby(7), 4);
    }

    #[test]
    fn luby_matches_recursion() {
        let mut memo = HashMap::new();
        for i in 1..=4096 {
            assert_eq!(luby(i), luby_oracle(i, &mut memo), "i = {i}");
        }
        for z in 1..=16u32 {
            assert_eq!(luby((1 << z) - 1), 1 << (z - 1));
        }
    }

    #[test]
    fn even_allocation() {
        let plan = BudgetPlan::new(100_000, 40_000, 40, 1, Strategy::Even).unwrap();
        assert_eq!(plan.allocate().unwrap().per_run, vec![1000; 40]);
    }

    #[test]
    fn luby_allocation() {
        let plan = BudgetPlan::new(10_000, 4000, 3, 1, Strategy::Luby).unwrap();
        assert_eq!(plan.allocate().unwrap().per_run, vec![1000, 1000, 2000]);

        let t1 = luby_sum(15) * 7;
        let plan = BudgetPlan::new(t1, t1, 15, 1, Strategy::Luby).unwrap();
        let alloc = plan.allocate().unwrap();
        let mut memo = HashMap::new();
        for (i, b) in alloc.per_run.iter().enumerate() {
            assert_eq!(*b, 7 * luby_oracle(i as u64 + 1, &mut memo));
        }
        assert_eq!(alloc.total(), t1);
    }

    #[test]
    fn divisibility_is_enforced() {
        assert!(BudgetPlan::new(1000, 999, 10, 1, Strategy::Even).is_err());
        assert!(BudgetPlan::new(1002, 1002, 3, 1, Strategy::Luby).is_err());
        assert!(BudgetPlan::new(1000, 1001, 1, 1, Strategy::Even).is_err());
        assert!(BudgetPlan::new(1000, 0, 2, 3, Strategy::Even).is_err());
        assert!(BudgetPlan::new(1000, 0, 0, 1, Strategy::Even).is_err());
    }

    #[test]
    fn presets() {
        let (plan, d) = Preset::F17.plan(100_000).unwrap();
        assert_eq!((plan.k, plan.m, plan.init), (40, 1, 40_000));
        assert_eq!(plan.allocate().unwrap().per_run, vec![1000; 40]);
        assert_eq!(d, Decider::CurrentBest);

        let (plan, _) = Preset::Single.plan(5000).unwrap();
        assert_eq!((plan.k, plan.init, plan.m), (1, 0, 1));

        let (plan, _) = Preset::Restarts(10).plan(10_000).unwrap();
        assert_eq!((plan.k, plan.init), (10, 10_000));
        assert_eq!(plan.horizon_per_run(), 0);
        assert_eq!(plan.allocate().unwrap().per_run, vec![1000; 10]);

        let (plan, _) = Preset::LubyRestarts(3).plan(4001).unwrap();
        assert_eq!(plan.init, 4000);
    }

    #[test]
    fn preset_names() {
        for (s, p) in [
            ("single", Preset::Single),
            ("f17", Preset::F17),
            ("restarts(10)", Preset::Restarts(10)),
            ("restarts:4", Preset::Restarts(4)),
            ("luby_restarts(40)", Preset::LubyRestarts(40)),
            ("luby-restarts-8", Preset::LubyRestarts(8)),
        ] {
            assert_eq!(s.parse::<Preset>().unwrap(), p);
            assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("f18".parse::<Preset>(), Err(Error::UnknownPreset(_))));
    }

    fn trace(id: &str, pairs: &[(Millis, f64)]) -> Arc<ImprovementTrace> {
        Arc::new(ImprovementTrace::from_pairs(id, pairs).unwrap())
    }

    fn zero_tau() -> RunOptions {
        RunOptions {
            tau: TauMode::Zero,
            seed: 1,
        }
    }

    #[test]
    fn single_run_is_the_baseline() {
        let tr = trace("a", &[(5, 10.0), (50, 8.0), (500, 3.0)]);
        let (plan, d) = Preset::Single.plan(400).unwrap();
        let r = run_bet_and_run(&plan, replay_sources(std::slice::from_ref(&tr), None), &d, zero_tau()).unwrap();
        assert_eq!(r.final_quality, tr.final_quality(400));
        assert_eq!(r.final_quality, Some(8.0));
        assert_eq!(r.continuation, 400);
    }

    #[test]
    fn full_init_budget_is_best_of_restarts() {
        let a = trace("a", &[(5, 10.0), (90, 7.0)]);
        let b = trace("b", &[(3, 9.0), (40, 8.5)]);
        let plan = BudgetPlan::new(200, 200, 2, 1, Strategy::Even).unwrap();
        let r = run_bet_and_run(&plan, replay_sources(&[a, b], None), &Decider::CurrentBest, zero_tau())
            .unwrap();
        assert_eq!(r.continuation, 0);
        assert_eq!(r.final_quality, Some(7.0));
        assert_eq!(r.winner_run_id.as_deref(), Some("a"));
    }

    #[test]
    fn continuation_remainder_goes_to_presumed_winner() {
        let a = trace("a", &[(1, 10.0)]);
        let b = trace("b", &[(1, 9.0)]);
        let c = trace("c", &[(1, 11.0)]);
        let plan = BudgetPlan::new(35, 3, 3, 2, Strategy::Even).unwrap();
        let r = run_bet_and_run(&plan, replay_sources(&[a, b, c], None), &Decider::CurrentBest, zero_tau())
            .unwrap();
        // t2 = 32, two picks: 16 each, no leftover
        assert_eq!(r.per_run_consumed, vec![17, 17, 1]);
        let plan = BudgetPlan::new(36, 3, 3, 2, Strategy::Even).unwrap();
        let r = run_bet_and_run(
            &plan,
            replay_sources(&[trace("a", &[(1, 10.0)]), trace("b", &[(1, 9.0)]), trace("c", &[(1, 11.0)])], None),
            &Decider::CurrentBest,
            zero_tau(),
        )
        .unwrap();
        assert_eq!(r.per_run_consumed, vec![17, 18, 1]);
        assert_eq!(r.per_run_consumed.iter().sum::<u64>(), 36);
    }

    #[test]
    fn measured_tau_clamps_continuation() {
        let plan = BudgetPlan::new(10, 10, 1, 1, Strategy::Even).unwrap();
        let r = run_bet_and_run(
            &plan,
            replay_sources(&[trace("a", &[(1, 1.0)])], None),
            &Decider::CurrentBest,
            RunOptions {
                tau: TauMode::Measured,
                seed: 0,
            },
        )
        .unwrap();
        assert!(r.tau >= 1);
        assert!(r.continuation_clamped);
        assert_eq!(r.continuation, 0);
    }

    #[test]
    fn exhausted_recordings_are_flagged() {
        let plan = BudgetPlan::new(100, 20, 2, 1, Strategy::Even).unwrap();
        let r = run_bet_and_run(
            &plan,
            replay_sources(&[trace("a", &[(1, 5.0)]), trace("b", &[(2, 6.0)])], Some(50)),
            &Decider::CurrentBest,
            zero_tau(),
        )
        .unwrap();
        assert_eq!(r.exhausted_runs, vec![0]);
        assert_eq!(r.final_quality, Some(5.0));
    }

    #[test]
    fn wrong_run_count_is_rejected() {
        let plan = BudgetPlan::new(100, 20, 2, 1, Strategy::Even).unwrap();
        assert!(run_bet_and_run(
            &plan,
            replay_sources(&[trace("a", &[(1, 5.0)])], None),
            &Decider::CurrentBest,
            zero_tau()
        )
        .is_err());
    }

    #[test]
    fn bad_cardinality_is_detected() {
        let out = DecisionOutcome::new(vec![0, 0]);
        assert!(checked_outcome(&out, 3, 2).is_err());
        let out = DecisionOutcome::new(vec![0, 3]);
        assert!(checked_outcome(&out, 3, 2).is_err());
        let out = DecisionOutcome::new(vec![2]);
        assert!(checked_outcome(&out, 3, 2).is_err());
        let out = DecisionOutcome::new(vec![2, 0]);
        assert!(checked_outcome(&out, 3, 2).is_ok());
    }

    fn arb_replay() -> impl proptest::strategy::Strategy<Value = (Vec<Arc<ImprovementTrace>>, BudgetPlan, Decider)> {
        use proptest::prelude::any;
        use proptest::strategy::Strategy as _;
        (1usize..6, 1usize..4, 1u64..40, 0u64..3000, any::<bool>(), 0usize..3).prop_flat_map(
            |(k, m, per_run, rest, luby_split, decider)| {
                let m = m.min(k);
                let strategy = if luby_split { Strategy::Luby } else { Strategy::Even };
                let unit = BudgetPlan { total: 0, init: 0, k, m, strategy }.unit();
                let init = per_run * unit;
                let plan = BudgetPlan { total: init + rest, init, k, m, strategy };
                let decider = [Decider::CurrentBest, Decider::Random, Decider::DiminishingReturns][decider].clone();
                proptest::collection::vec(proptest::collection::vec((1u64..300, 1u32..40), 0..10), k).prop_map(move |runs| {
                    let traces = runs
                        .into_iter()
                        .enumerate()
                        .map(|(i, steps)| {
                            let (mut t, mut q) = (0u64, 5000.0);
                            let pairs: Vec<(Millis, f64)> = steps
                                .into_iter()
                                .map(|(dt, dq)| {
                                    t += dt;
                                    q -= dq as f64;
                                    (t, q)
                                })
                                .collect();
                            Arc::new(ImprovementTrace::from_pairs(format!("r{i}"), &pairs).unwrap())
                        })
                        .collect();
                    (traces, plan, decider.clone())
                })
            },
        )
    }

    proptest::proptest! {
        #[test]
        fn budget_is_conserved((traces, plan, decider) in arb_replay(), seed in 0u64..1000) {
            let opts = RunOptions { tau: TauMode::Zero, seed };
            let r = run_bet_and_run(&plan, replay_sources(&traces, None), &decider, opts).unwrap();
            proptest::prop_assert_eq!(r.init_budget + r.tau + r.continuation, plan.total);
            proptest::prop_assert_eq!(r.allocation.iter().sum::<Millis>(), plan.init);
            proptest::prop_assert_eq!(r.per_run_consumed.iter().sum::<Millis>(), plan.total);
        }

        #[test]
        fn replay_is_deterministic((traces, plan, decider) in arb_replay(), seed in 0u64..1000) {
            let opts = RunOptions { tau: TauMode::Zero, seed };
            let a = run_bet_and_run(&plan, replay_sources(&traces, None), &decider, opts).unwrap();
            let b = run_bet_and_run(&plan, replay_sources(&traces, None), &decider, opts).unwrap();
            proptest::prop_assert_eq!(a, b);
        }

        #[test]
        fn luby_is_self_similar(z in 2u32..16, offset in 0u64..32_768) {
            let lo = 1u64 << (z - 1);
            let i = lo + offset % (lo - 1);
            // 2^(z-1) <= i < 2^z - 1
            proptest::prop_assert_eq!(luby(i), luby(i - lo + 1));
        }
    }
}
