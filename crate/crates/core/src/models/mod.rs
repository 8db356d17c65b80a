//! Model-based decision making.
//!
//! Each run's recent history is turned into `(x, y)` training pairs, a curve
//! `q̂(t)` is fitted, and the run is scored by the curve's value at the time
//! it would reach if continued. Predictions never exceed the run's last
//! measured quality, and any run whose fit fails is scored by that last
//! quality instead.

pub mod es;
pub mod lm;
pub mod perceptron;
pub mod poly;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

pub use es::Trainer;
pub use perceptron::{Activation, PerceptronModel};
pub use poly::{FitMethod, PolynomialModel};

use crate::deciders::{pick_lowest, DecisionContext, DecisionOutcome};
use crate::error::Error;
use crate::rng;
use crate::trace::{Millis, TraceView};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("degenerate system")]
    Degenerate,
    #[error("non-finite value during fit")]
    NonFinite,
    #[error("value outside the domain of the log transform")]
    Domain,
}

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_MAX_EVALUATIONS: usize = 400;

/// How a run's history is turned into training pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Preprocessing {
    /// `x = ln(1 + time)`
    pub log_time: bool,
    /// `y = ln(1 + quality)`
    pub log_quality: bool,
    /// Append `(b_i, last quality)` when the last point precedes `b_i`.
    pub virtual_end_point: bool,
    /// Number of most recent points used.
    pub window: usize,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Preprocessing {
            log_time: false,
            log_quality: false,
            virtual_end_point: false,
            window: DEFAULT_WINDOW,
        }
    }
}

fn forward(flag: bool, v: f64) -> Result<f64, FitError> {
    if !flag {
        return Ok(v);
    }
    if v <= -1.0 {
        return Err(FitError::Domain);
    }
    Ok(v.ln_1p())
}

fn inverse(flag: bool, v: f64) -> f64 {
    if flag {
        v.exp_m1()
    } else {
        v
    }
}

impl Preprocessing {
    pub fn time_to_x(&self, t: f64) -> Result<f64, FitError> {
        forward(self.log_time, t)
    }

    pub fn x_to_time(&self, x: f64) -> f64 {
        inverse(self.log_time, x)
    }

    pub fn quality_to_y(&self, q: f64) -> Result<f64, FitError> {
        forward(self.log_quality, q)
    }

    pub fn y_to_quality(&self, y: f64) -> f64 {
        inverse(self.log_quality, y)
    }

    fn suffix(&self) -> String {
        let mut s = String::new();
        if self.log_time {
            s.push_str("-logt");
        }
        if self.log_quality {
            s.push_str("-logq");
        }
        if self.virtual_end_point {
            s.push_str("-vep");
        }
        s
    }

    fn all() -> impl Iterator<Item = Preprocessing> {
        (0..8u8).map(|bits| Preprocessing {
            log_time: bits & 1 != 0,
            log_quality: bits & 2 != 0,
            virtual_end_point: bits & 4 != 0,
            window: DEFAULT_WINDOW,
        })
    }
}

/// Training pairs for a run paused at `budget`.
pub fn make_training_set(
    view: &TraceView,
    budget: Millis,
    prep: &Preprocessing,
) -> Result<Vec<(f64, f64)>, FitError> {
    let pts = view.points();
    let start = pts.len().saturating_sub(prep.window.max(1));
    let mut raw: Vec<(f64, f64)> = pts[start..]
        .iter()
        .map(|p| (p.time as f64, p.quality))
        .collect();
    if prep.virtual_end_point {
        if let Some(last) = pts.last() {
            if last.time < budget {
                raw.push((budget as f64, last.quality));
            }
        }
    }
    raw.into_iter()
        .map(|(t, q)| Ok((prep.time_to_x(t)?, prep.quality_to_y(q)?)))
        .collect()
}

/// A model configuration, addressable by identifier:
/// `poly-<1|2|3>-<direct|lm>[-logt][-logq][-vep]`,
/// `mlp-<0..3>-<tanh|step>-<cma|csa>[-logt][-logq][-vep]`, or
/// `first-last-linear`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    Polynomial {
        degree: usize,
        method: FitMethod,
        prep: Preprocessing,
    },
    Perceptron {
        hidden: usize,
        activation: Activation,
        trainer: Trainer,
        prep: Preprocessing,
    },
    /// Line through the first measured point and `(b_i, last quality)`.
    FirstLastLinear,
}

impl ModelSpec {
    /// Every identifier the grammar admits.
    pub fn grid() -> Vec<ModelSpec> {
        let mut out = Vec::new();
        for degree in 1..=3 {
            for method in [FitMethod::Direct, FitMethod::LevenbergMarquardt] {
                for prep in Preprocessing::all() {
                    out.push(ModelSpec::Polynomial {
                        degree,
                        method,
                        prep,
                    });
                }
            }
        }
        for hidden in 0..=3 {
            for activation in [Activation::Tanh, Activation::Step] {
                for trainer in [Trainer::SepCmaEs, Trainer::Csa] {
                    for prep in Preprocessing::all() {
                        out.push(ModelSpec::Perceptron {
                            hidden,
                            activation,
                            trainer,
                            prep,
                        });
                    }
                }
            }
        }
        out.push(ModelSpec::FirstLastLinear);
        out
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Polynomial {
                degree,
                method,
                prep,
            } => {
                let m = match method {
                    FitMethod::Direct => "direct",
                    FitMethod::LevenbergMarquardt => "lm",
                };
                write!(f, "poly-{degree}-{m}{}", prep.suffix())
            }
            ModelSpec::Perceptron {
                hidden,
                activation,
                trainer,
                prep,
            } => {
                let a = match activation {
                    Activation::Tanh => "tanh",
                    Activation::Step => "step",
                };
                let t = match trainer {
                    Trainer::SepCmaEs => "cma",
                    Trainer::Csa => "csa",
                };
                write!(f, "mlp-{hidden}-{a}-{t}{}", prep.suffix())
            }
            ModelSpec::FirstLastLinear => f.write_str("first-last-linear"),
        }
    }
}

fn parse_flags<'a>(rest: impl Iterator<Item = &'a str>) -> Option<Preprocessing> {
    let mut prep = Preprocessing::default();
    let mut rank = 0;
    for flag in rest {
        let (slot, r) = match flag {
            "logt" => (&mut prep.log_time, 1),
            "logq" => (&mut prep.log_quality, 2),
            "vep" => (&mut prep.virtual_end_point, 3),
            _ => return None,
        };
        // canonical order only, no repeats
        if r <= rank {
            return None;
        }
        rank = r;
        *slot = true;
    }
    Some(prep)
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || Error::UnknownDecider(s.to_string());
        if s == "first-last-linear" {
            return Ok(ModelSpec::FirstLastLinear);
        }
        let mut parts = s.split('-');
        match parts.next() {
            Some("poly") => {
                let degree = match parts.next() {
                    Some("1") => 1,
                    Some("2") => 2,
                    Some("3") => 3,
                    _ => return Err(bad()),
                };
                let method = match parts.next() {
                    Some("direct") => FitMethod::Direct,
                    Some("lm") => FitMethod::LevenbergMarquardt,
                    _ => return Err(bad()),
                };
                let prep = parse_flags(parts).ok_or_else(bad)?;
                Ok(ModelSpec::Polynomial {
                    degree,
                    method,
                    prep,
                })
            }
            Some("mlp") => {
                let hidden = match parts.next() {
                    Some(n @ ("0" | "1" | "2" | "3")) => n.parse().expect("digit"),
                    _ => return Err(bad()),
                };
                let activation = match parts.next() {
                    Some("tanh") => Activation::Tanh,
                    Some("step") => Activation::Step,
                    _ => return Err(bad()),
                };
                let trainer = match parts.next() {
                    Some("cma") => Trainer::SepCmaEs,
                    Some("csa") => Trainer::Csa,
                    _ => return Err(bad()),
                };
                let prep = parse_flags(parts).ok_or_else(bad)?;
                Ok(ModelSpec::Perceptron {
                    hidden,
                    activation,
                    trainer,
                    prep,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Limits for iterative fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitBudget {
    pub max_evaluations: usize,
    pub training_window: usize,
}

impl Default for FitBudget {
    fn default() -> Self {
        FitBudget {
            max_evaluations: DEFAULT_MAX_EVALUATIONS,
            training_window: DEFAULT_WINDOW,
        }
    }
}

/// Affine map of the training data onto a unit box, so a perceptron
/// initialised at zero with step size 1 starts at a sensible scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    x_offset: f64,
    x_scale: f64,
    y_offset: f64,
    y_scale: f64,
}

impl Normalizer {
    pub fn fit(pairs: &[(f64, f64)]) -> Self {
        let n = pairs.len().max(1) as f64;
        let x_min = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let x_max = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y_mean = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let y_sd = (pairs.iter().map(|p| (p.1 - y_mean).powi(2)).sum::<f64>() / n).sqrt();
        let x_range = x_max - x_min;
        Normalizer {
            x_offset: if x_min.is_finite() { x_min } else { 0.0 },
            x_scale: if x_range > 0.0 { x_range } else { 1.0 },
            y_offset: y_mean,
            y_scale: if y_sd > 0.0 { y_sd } else { 1.0 },
        }
    }

    pub fn x(&self, x: f64) -> f64 {
        (x - self.x_offset) / self.x_scale
    }

    pub fn y(&self, y: f64) -> f64 {
        (y - self.y_offset) / self.y_scale
    }

    pub fn y_back(&self, y: f64) -> f64 {
        y * self.y_scale + self.y_offset
    }
}

/// A fitted curve in transformed coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Curve {
    Polynomial(PolynomialModel),
    Perceptron {
        model: PerceptronModel,
        normalizer: Normalizer,
    },
}

impl Curve {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Curve::Polynomial(p) => p.eval(x),
            Curve::Perceptron { model, normalizer } => {
                normalizer.y_back(model.eval(normalizer.x(x)))
            }
        }
    }
}

/// A fitted curve together with the preprocessing that produced its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionModel {
    pub curve: Curve,
    pub prep: Preprocessing,
}

impl PredictionModel {
    /// Predicted quality at `time`, back in raw quality units.
    pub fn predict(&self, time: f64) -> Result<f64, FitError> {
        let x = self.prep.time_to_x(time)?;
        let q = self.prep.y_to_quality(self.curve.eval(x));
        if q.is_finite() {
            Ok(q)
        } else {
            Err(FitError::NonFinite)
        }
    }
}

/// Fits `spec` to one run. `FirstLastLinear` is not a fitted model and
/// yields [`FitError::Degenerate`].
pub fn fit_run(
    view: &TraceView,
    budget: Millis,
    spec: &ModelSpec,
    fit_budget: &FitBudget,
    seed: u64,
) -> Result<PredictionModel, FitError> {
    match spec {
        ModelSpec::Polynomial {
            degree,
            method,
            prep,
        } => {
            let pairs = make_training_set(view, budget, prep)?;
            let model = match method {
                FitMethod::Direct => poly::fit_direct(&pairs, *degree)?,
                FitMethod::LevenbergMarquardt => poly::fit_lm(&pairs, *degree)?,
            };
            Ok(PredictionModel {
                curve: Curve::Polynomial(model),
                prep: *prep,
            })
        }
        ModelSpec::Perceptron {
            hidden,
            activation,
            trainer,
            prep,
        } => {
            let pairs = make_training_set(view, budget, prep)?;
            if pairs.is_empty() {
                return Err(FitError::TooFewPoints { need: 1, got: 0 });
            }
            let normalizer = Normalizer::fit(&pairs);
            let scaled: Vec<(f64, f64)> = pairs
                .iter()
                .map(|&(x, y)| (normalizer.x(x), normalizer.y(y)))
                .collect();
            let mut r = rng::stream(seed, &[]);
            let report = perceptron::train(
                &scaled,
                *hidden,
                *activation,
                *trainer,
                fit_budget.max_evaluations,
                &mut r,
            );
            Ok(PredictionModel {
                curve: Curve::Perceptron {
                    model: report.model,
                    normalizer,
                },
                prep: *prep,
            })
        }
        ModelSpec::FirstLastLinear => Err(FitError::Degenerate),
    }
}

/// Line through `(t_first, q_first)` and `(b_i, q_last)` evaluated at
/// `target`. `None` when the two anchors share a time.
pub fn first_last_prediction(view: &TraceView, budget: Millis, target: Millis) -> Option<f64> {
    let first = view.first()?;
    let last = view.last()?;
    if first.time >= budget {
        return None;
    }
    let slope = (last.quality - first.quality) / (budget - first.time) as f64;
    Some(last.quality + slope * (target as f64 - budget as f64))
}

/// Outcome of predicting one run.
#[derive(Clone, Copy, Debug, PartialEq)]
enum RunPrediction {
    Absent,
    Model(f64),
    Fallback(f64),
}

fn predict_run(
    ctx: &DecisionContext,
    i: usize,
    spec: &ModelSpec,
    fit_budget: &FitBudget,
) -> RunPrediction {
    let view = &ctx.views[i];
    let Some(last) = view.last_quality() else {
        return RunPrediction::Absent;
    };
    let budget = ctx.budgets[i];
    let target = ctx.target_time(i);
    let raw = match spec {
        ModelSpec::FirstLastLinear => first_last_prediction(view, budget, target),
        _ => {
            let seed = rng::derive_seed(ctx.seed, &[rng::TAG_TRAIN, i as u64]);
            fit_run(view, budget, spec, fit_budget, seed)
                .and_then(|m| m.predict(target as f64))
                .ok()
        }
    };
    match raw {
        Some(q) if q.is_finite() => RunPrediction::Model(q.min(last)),
        _ => RunPrediction::Fallback(last),
    }
}

pub fn predict_and_select(ctx: &DecisionContext, spec: &ModelSpec, m: usize) -> DecisionOutcome {
    predict_and_select_with(ctx, spec, m, &FitBudget::default())
}

/// Fits every run, predicts its quality at `b_i + horizon_per_run`, and picks
/// the `m` best predictions.
pub fn predict_and_select_with(
    ctx: &DecisionContext,
    spec: &ModelSpec,
    m: usize,
    fit_budget: &FitBudget,
) -> DecisionOutcome {
    let runs: Vec<RunPrediction> = (0..ctx.k())
        .into_par_iter()
        .map(|i| predict_run(ctx, i, spec, fit_budget))
        .collect();
    let predictions: Vec<Option<f64>> = runs
        .iter()
        .map(|r| match r {
            RunPrediction::Absent => None,
            RunPrediction::Model(q) | RunPrediction::Fallback(q) => Some(*q),
        })
        .collect();
    let fallbacks = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r, RunPrediction::Fallback(_)))
        .map(|(i, _)| i)
        .collect();
    DecisionOutcome {
        chosen: pick_lowest(&predictions, m),
        tau: 0,
        predictions: Some(predictions),
        fallbacks,
    }
}

/// Per-run dump lines `run_id,model_id,prediction,params...`.
pub fn dump_models(ctx: &DecisionContext, spec: &ModelSpec, fit_budget: &FitBudget) -> Vec<String> {
    (0..ctx.k())
        .map(|i| {
            let view = &ctx.views[i];
            let prediction = match predict_run(ctx, i, spec, fit_budget) {
                RunPrediction::Absent => "NA".to_string(),
                RunPrediction::Model(q) | RunPrediction::Fallback(q) => crate::format::sig12(q),
            };
            let seed = rng::derive_seed(ctx.seed, &[rng::TAG_TRAIN, i as u64]);
            let params: Vec<f64> = match fit_run(view, ctx.budgets[i], spec, fit_budget, seed) {
                Ok(PredictionModel {
                    curve: Curve::Polynomial(p),
                    ..
                }) => p.monomial_coefficients(),
                Ok(PredictionModel {
                    curve: Curve::Perceptron { model, .. },
                    ..
                }) => model.weights,
                Err(_) => Vec::new(),
            };
            let mut line = format!("{},{},{}", view.trace().run_id(), spec, prediction);
            for p in params {
                line.push(',');
                line.push_str(&crate::format::sig12(p));
            }
            line
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deciders::current_best;
    use crate::trace::ImprovementTrace;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn tr(pairs: &[(Millis, f64)]) -> Arc<ImprovementTrace> {
        Arc::new(ImprovementTrace::from_pairs("r", pairs).unwrap())
    }

    #[test]
    fn virtual_end_point_is_appended() {
        let t = tr(&[(100, 120.0), (800, 100.0)]);
        let prep = Preprocessing {
            virtual_end_point: true,
            ..Default::default()
        };
        let pairs = make_training_set(&t.view(1000), 1000, &prep).unwrap();
        assert_eq!(pairs, vec![(100.0, 120.0), (800.0, 100.0), (1000.0, 100.0)]);
        let pairs = make_training_set(&t.view(800), 800, &prep).unwrap();
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn window_limits_points() {
        let pairs: Vec<(Millis, f64)> = (1..=25).map(|i| (i * 10, 1000.0 - i as f64)).collect();
        let t = tr(&pairs);
        let set = make_training_set(&t.view(1000), 1000, &Preprocessing::default()).unwrap();
        assert_eq!(set.len(), 10);
        assert_eq!(set[0].0, 160.0);
        let short = tr(&pairs[..4]);
        let set = make_training_set(&short.view(1000), 1000, &Preprocessing::default()).unwrap();
        assert_eq!(set.len(), 4);
    }

    #[test]
    fn log_transforms_invert() {
        let prep = Preprocessing {
            log_time: true,
            log_quality: true,
            ..Default::default()
        };
        for t in [1.0, 7.0, 1234.0, 9.9e7] {
            let back = prep.x_to_time(prep.time_to_x(t).unwrap());
            assert!((back - t).abs() <= 1e-12 * t.max(1.0), "{t} -> {back}");
        }
        assert_eq!(prep.quality_to_y(-1.0), Err(FitError::Domain));
    }

    #[test]
    fn identifier_grammar() {
        for spec in ModelSpec::grid() {
            let id = spec.to_string();
            assert_eq!(id.parse::<ModelSpec>().unwrap(), spec, "{id}");
        }
        assert_eq!(ModelSpec::grid().len(), 48 + 128 + 1);
        for bad in ["poly-4-direct", "poly-1-direct-vep-logt", "mlp-4-tanh-cma", "mlp-1-relu-cma", "poly-1-lm-vep-vep", "poly"] {
            assert!(bad.parse::<ModelSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn flat_traces_agree_with_current_best() {
        let traces = vec![tr(&[(5, 50.0)]), tr(&[(3, 40.0)]), tr(&[(9, 45.0)])];
        let ctx = DecisionContext::new(&traces, &[10, 10, 10], 1000, 0);
        for id in ["poly-1-direct-vep", "poly-2-lm-vep", "mlp-1-tanh-cma-vep", "first-last-linear"] {
            let spec: ModelSpec = id.parse().unwrap();
            let out = predict_and_select(&ctx, &spec, 2);
            assert_eq!(out.chosen, current_best(&ctx, 2).chosen, "{id}");
            assert_eq!(
                out.predictions.unwrap(),
                vec![Some(50.0), Some(40.0), Some(45.0)],
                "{id}"
            );
        }
    }

    #[test]
    fn linear_model_sees_the_crossing() {
        // A: 100 -> 96, B: 120 -> 98 over the same span, B much steeper
        let a = tr(&[(1, 100.0), (1000, 96.0)]);
        let b = tr(&[(1, 120.0), (1000, 98.0)]);
        let traces = vec![a, b];
        let ctx = DecisionContext::new(&traces, &[1000, 1000], 10_000, 0);
        let spec: ModelSpec = "poly-1-direct".parse().unwrap();
        let out = predict_and_select(&ctx, &spec, 1);
        // hand evaluation of the two lines at t = 11000
        let line = |q0: f64, q1: f64| q1 + (q1 - q0) / 999.0 * 10_000.0;
        let preds = out.predictions.unwrap();
        assert!((preds[0].unwrap() - line(100.0, 96.0)).abs() < 1e-9);
        assert!((preds[1].unwrap() - line(120.0, 98.0)).abs() < 1e-9);
        assert_eq!(out.chosen, vec![1]);
        assert_eq!(current_best(&ctx, 1).chosen, vec![0]);
    }

    #[test]
    fn upward_fits_are_clamped() {
        // parabola through these turns upward after the last point
        let t = tr(&[(1, 100.0), (5, 60.0), (9, 59.0)]);
        let traces = vec![t];
        let ctx = DecisionContext::new(&traces, &[10], 1000, 0);
        let out = predict_and_select(&ctx, &"poly-2-direct".parse().unwrap(), 1);
        assert_eq!(out.predictions.unwrap()[0], Some(59.0));
        assert!(out.fallbacks.is_empty());
    }

    #[test]
    fn failed_fits_fall_back() {
        let traces = vec![tr(&[(5, 50.0)]), tr(&[]), tr(&[(2, 30.0), (3, 29.0)])];
        let ctx = DecisionContext::new(&traces, &[10, 10, 10], 100, 0);
        let out = predict_and_select(&ctx, &"poly-3-direct".parse().unwrap(), 2);
        assert_eq!(out.fallbacks, vec![0, 2]);
        assert_eq!(out.chosen, current_best(&ctx, 2).chosen);
    }

    #[test]
    fn first_last_examples() {
        let t = tr(&[(1, 100.0), (400, 95.0), (700, 90.0)]);
        let p = first_last_prediction(&t.view(1000), 1000, 2000).unwrap();
        assert!((p - (90.0 - 10.0 * 1000.0 / 999.0)).abs() < 1e-12);
        assert!((p - 79.99).abs() < 0.01);

        let flat = tr(&[(1, 100.0)]);
        assert_eq!(first_last_prediction(&flat.view(1000), 1000, 2000), Some(100.0));

        let edge = tr(&[(1000, 7.0)]);
        assert_eq!(first_last_prediction(&edge.view(1000), 1000, 2000), None);
        let traces = vec![edge];
        let ctx = DecisionContext::new(&traces, &[1000], 1000, 0);
        let out = predict_and_select(&ctx, &ModelSpec::FirstLastLinear, 1);
        assert_eq!(out.predictions.unwrap(), vec![Some(7.0)]);
    }

    #[test]
    fn dumps_one_line_per_run() {
        let traces = vec![tr(&[(1, 10.0), (2, 8.0)]), tr(&[])];
        let ctx = DecisionContext::new(&traces, &[5, 5], 10, 0);
        let lines = dump_models(&ctx, &"poly-1-direct".parse().unwrap(), &FitBudget::default());
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("r,poly-1-direct,"), "{}", lines[0]);
        assert!(lines[1].ends_with(",NA"), "{}", lines[1]);
    }

    proptest! {
        #[test]
        fn predictions_never_exceed_last(
            steps in prop::collection::vec((1u64..300, 1u32..40), 1..15),
            spec_idx in 0usize..6,
            horizon in 0u64..50_000,
        ) {
            let (mut t, mut q) = (0u64, 5000.0);
            let pairs: Vec<(Millis, f64)> = steps.into_iter().map(|(dt, dq)| { t += dt; q -= dq as f64; (t, q) }).collect();
            let traces = vec![tr(&pairs)];
            let budget = t + 5;
            let ctx = DecisionContext::new(&traces, &[budget], horizon, 3);
            let spec: ModelSpec = ["poly-1-direct", "poly-2-lm-logt", "poly-3-direct-vep", "mlp-0-tanh-csa-logq", "mlp-2-step-cma-vep", "first-last-linear"][spec_idx].parse().unwrap();
            let out = predict_and_select(&ctx, &spec, 1);
            prop_assert!(out.predictions.unwrap()[0].unwrap() <= q);
        }

        #[test]
        fn transformed_ranking_matches_raw(ys in prop::collection::vec(0.0f64..1e6, 1..12), m_frac in 0.0f64..1.0) {
            let m = 1 + ((ys.len() - 1) as f64 * m_frac) as usize;
            let prep = Preprocessing { log_quality: true, ..Default::default() };
            let transformed: Vec<Option<f64>> = ys.iter().map(|&y| Some(prep.quality_to_y(y).unwrap())).collect();
            let raw: Vec<Option<f64>> = transformed.iter().map(|y| Some(prep.y_to_quality(y.unwrap()))).collect();
            let mut a = pick_lowest(&transformed, m);
            let mut b = pick_lowest(&raw, m);
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }

    proptest! {
        #[test]
        fn all_failed_fits_reduce_to_current_best(
            runs in prop::collection::vec(prop::option::of((1u64..100, 0.0f64..1e4)), 1..8),
            m_frac in 0.0f64..1.0,
            degree in 2usize..4,
        ) {
            // at most one point per run, never enough for an interpolation of degree >= 2
            let traces: Vec<Arc<ImprovementTrace>> = runs
                .iter()
                .map(|r| match r {
                    Some((t, q)) => tr(&[(*t, *q)]),
                    None => tr(&[]),
                })
                .collect();
            let budgets = vec![100; traces.len()];
            let ctx = DecisionContext::new(&traces, &budgets, 1000, 0);
            let m = 1 + (m_frac * (traces.len() - 1) as f64) as usize;
            let spec: ModelSpec = format!("poly-{degree}-direct").parse().unwrap();
            prop_assert_eq!(predict_and_select(&ctx, &spec, m).chosen, current_best(&ctx, m).chosen);
        }
    }
}
