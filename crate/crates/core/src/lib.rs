//! Bet-and-run restart strategies.
//!
//! A bet-and-run strategy spends an initialization budget `t1` on `k`
//! independent runs, pauses them, lets a decision maker pick `m` of them from
//! their improvement traces, and continues only the picks with the rest of
//! the total budget `T`. This crate provides the budget arithmetic and
//! orchestration ([`budget`]), trace handling ([`trace`]), heuristic and
//! model-based decision makers ([`deciders`], [`models`]), trace sources
//! ([`solvers`]) and the evaluation methodology ([`bench`]).
//!
//! ```
//! use std::sync::Arc;
//! use betrun::{run_bet_and_run, replay_sources, BudgetPlan, Decider, ImprovementTrace, RunOptions, Strategy, TauMode};
//!
//! let traces: Vec<Arc<ImprovementTrace>> = vec![
//!     Arc::new(ImprovementTrace::from_pairs("a", &[(10, 100.0), (900, 80.0)]).unwrap()),
//!     Arc::new(ImprovementTrace::from_pairs("b", &[(5, 90.0), (3000, 85.0)]).unwrap()),
//! ];
//! let plan = BudgetPlan::new(4000, 200, 2, 1, Strategy::Even).unwrap();
//! let options = RunOptions { tau: TauMode::Zero, seed: 1 };
//! let result = run_bet_and_run(&plan, replay_sources(&traces, None), &Decider::CurrentBest, options).unwrap();
//! assert_eq!(result.winner, Some(1));
//! assert_eq!(result.final_quality, Some(85.0));
//! ```

pub mod bench;
pub mod budget;
pub mod deciders;
pub mod error;
pub mod format;
pub mod models;
pub mod rng;
pub mod solvers;
pub mod trace;

pub use budget::{
    luby, replay_sources, run_bet_and_run, BetAndRunResult, BudgetAllocation, BudgetPlan, Preset,
    ReplayRun, RunOptions, RunSource, Strategy, TauMode,
};
pub use deciders::{Decider, DecisionContext, DecisionOutcome};
pub use error::{Error, Result};
pub use models::{ModelSpec, Preprocessing};
pub use trace::{ImprovementTrace, Millis, Point, TraceDataset, TraceSource, TraceView};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/traces.md")]
    struct Traces;
    #[doc = include_str!("../../../book/src/budgets.md")]
    struct Budgets;
    #[doc = include_str!("../../../book/src/deciders.md")]
    struct Deciders;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/solvers.md")]
    struct Solvers;
    #[doc = include_str!("../../../book/src/benchmarking.md")]
    struct Benchmarking;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
