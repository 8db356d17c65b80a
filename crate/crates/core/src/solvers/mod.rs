//! Trace sources for live runs and test fixtures.
//!
//! A solver is anything that can do one unit of work at a time and report
//! when its best-so-far quality strictly improves. [`LiveRun`] drives such a
//! solver under a clock and records the improvements as a trace, so a live
//! solver can be used wherever a replayed trace can.
//!
//! Under [`Clock::VirtualSteps`] one unit of work is one millisecond, which
//! makes live runs deterministic per seed. [`Clock::Wall`] uses real elapsed
//! time and is not reproducible.

pub mod mvc;
pub mod synthetic;
pub mod tsp;

use std::time::{Duration, Instant};

use crate::budget::RunSource;
use crate::trace::{ImprovementTrace, Millis, Point, TraceSource, TraceView};

pub use mvc::{parse_edge_list, solve_mvc, MvcInstance, MvcSolver};
pub use synthetic::{generate_synthetic, generate_synthetic_dataset, CurveJitter, GapDistribution, SyntheticCurveSpec};
pub use tsp::{parse_tsplib, solve_tsp, TspInstance, TspSolver};

/// An anytime minimiser advanced one unit of work at a time.
pub trait AnytimeSolver: Send {
    /// Does one unit of work; returns the new best quality if it improved.
    fn step(&mut self) -> Option<f64>;

    fn best(&self) -> Option<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Clock {
    /// One solver step per millisecond.
    #[default]
    VirtualSteps,
    Wall,
}

/// A solver run that can be paused and resumed.
pub struct LiveRun<S> {
    solver: S,
    clock: Clock,
    trace: ImprovementTrace,
    consumed: Millis,
    active: Duration,
}

impl<S: AnytimeSolver> LiveRun<S> {
    pub fn new(run_id: impl Into<String>, solver: S, clock: Clock) -> Self {
        LiveRun {
            solver,
            clock,
            trace: ImprovementTrace::empty(run_id, TraceSource::Live),
            consumed: 0,
            active: Duration::ZERO,
        }
    }

    pub fn trace(&self) -> &ImprovementTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ImprovementTrace {
        self.trace
    }

    pub fn solver(&self) -> &S {
        &self.solver
    }

    fn record(&mut self, time: Millis, quality: f64) -> Point {
        let time = time.max(1);
        match self.trace.last() {
            Some(last) if last.time >= time => {
                self.trace
                    .improve_last(quality)
                    .expect("solver reported a non-improvement");
            }
            _ => self
                .trace
                .push(Point::new(time, quality))
                .expect("solver reported a non-improvement"),
        }
        *self.trace.last().expect("just recorded")
    }

    /// Advances to `until` and reports every recorded improvement to `emit`.
    pub fn advance_with(&mut self, until: Millis, mut emit: impl FnMut(Point)) {
        if until <= self.consumed {
            return;
        }
        match self.clock {
            Clock::VirtualSteps => {
                for step in self.consumed + 1..=until {
                    if let Some(q) = self.solver.step() {
                        emit(self.record(step, q));
                    }
                }
            }
            Clock::Wall => {
                let limit = Duration::from_millis(until);
                let started = Instant::now();
                loop {
                    let now = self.active + started.elapsed();
                    if now >= limit {
                        break;
                    }
                    if let Some(q) = self.solver.step() {
                        // stamped with the 1-based millisecond in progress
                        let t = (self.active + started.elapsed()).as_millis() as Millis + 1;
                        emit(self.record(t.min(until), q));
                    }
                }
                self.active += started.elapsed();
            }
        }
        self.consumed = until;
    }
}

impl<S: AnytimeSolver> RunSource for LiveRun<S> {
    fn run_id(&self) -> &str {
        self.trace.run_id()
    }

    fn consumed(&self) -> Millis {
        self.consumed
    }

    fn advance(&mut self, until: Millis) {
        self.advance_with(until, |_| {});
    }

    fn view(&self) -> TraceView<'_> {
        self.trace.view(self.consumed)
    }
}

/// Runs `solver` for `budget` and returns its trace.
pub fn run_solver<S: AnytimeSolver>(
    run_id: impl Into<String>,
    solver: S,
    budget: Millis,
    clock: Clock,
    emit: impl FnMut(Point),
) -> ImprovementTrace {
    let mut run = LiveRun::new(run_id, solver, clock);
    run.advance_with(budget, emit);
    run.into_trace()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Countdown(f64);

    impl AnytimeSolver for Countdown {
        fn step(&mut self) -> Option<f64> {
            if self.0 > 0.0 {
                self.0 -= 1.0;
                Some(self.0)
            } else {
                None
            }
        }

        fn best(&self) -> Option<f64> {
            Some(self.0)
        }
    }

    #[test]
    fn virtual_steps_are_milliseconds() {
        let mut run = LiveRun::new("c", Countdown(5.0), Clock::VirtualSteps);
        run.advance(2);
        assert_eq!(run.view().points(), &[Point::new(1, 4.0), Point::new(2, 3.0)]);
        run.advance(1);
        assert_eq!(run.consumed(), 2);
        let mut seen = Vec::new();
        run.advance_with(10, |p| seen.push(p.time));
        assert_eq!(seen, vec![3, 4, 5]);
        assert_eq!(run.trace().len(), 5);
    }

    #[test]
    fn wall_clock_traces_are_valid() {
        let trace = run_solver("w", Countdown(1e6), 3, Clock::Wall, |_| {});
        assert!(!trace.is_empty());
        assert!(trace.last().unwrap().time <= 3);
        ImprovementTrace::new("copy", TraceSource::Live, trace.points().to_vec()).unwrap();
    }
}
