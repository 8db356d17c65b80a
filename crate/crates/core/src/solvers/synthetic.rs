//! Synthetic traces following a power law `q(t) = q_inf + a·t^(-c)`.
//!
//! Improvement times come from a gap distribution; qualities are the curve
//! value at each time, rounded to a multiple of `quantum`, and a time whose
//! rounded quality does not strictly improve on the previous one records no
//! point. The same seed always gives the same trace.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::trace::{ImprovementTrace, Millis, Point, TraceDataset, TraceSource};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GapDistribution {
    /// Every gap has the same length.
    Fixed(Millis),
    /// Exponentially distributed gaps with the given mean.
    Exponential { mean: f64 },
    /// The `j`-th gap is `first · ratio^j` times an Exp(1) factor.
    Geometric { first: f64, ratio: f64 },
}

impl GapDistribution {
    fn sample(&self, j: u32, rng: &mut StreamRng) -> Millis {
        let raw = match *self {
            GapDistribution::Fixed(g) => g as f64,
            GapDistribution::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            GapDistribution::Geometric { first, ratio } => {
                let e: f64 = Exp1.sample(rng);
                first * ratio.powi(j as i32) * e
            }
        };
        (raw.ceil() as Millis).max(1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticCurveSpec {
    pub q_inf: f64,
    pub amplitude: f64,
    pub decay: f64,
    pub gaps: GapDistribution,
    /// Rounding unit for qualities; 0 keeps raw curve values.
    pub quantum: f64,
    /// No point is generated after this time.
    pub horizon: Millis,
    pub seed: u64,
}

impl SyntheticCurveSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude > 0.0
            && self.decay > 0.0
            && self.q_inf.is_finite()
            && self.amplitude.is_finite()
            && self.decay.is_finite()
            && self.quantum >= 0.0
            && self.horizon >= 1;
        let gaps_ok = match self.gaps {
            GapDistribution::Fixed(g) => g >= 1,
            GapDistribution::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            GapDistribution::Geometric { first, ratio } => {
                first > 0.0 && ratio > 0.0 && first.is_finite() && ratio.is_finite()
            }
        };
        if ok && gaps_ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid synthetic curve {self:?}")))
        }
    }

    /// The underlying continuous curve.
    pub fn curve(&self, t: f64) -> f64 {
        self.q_inf + self.amplitude * t.powf(-self.decay)
    }

    fn discretise(&self, q: f64) -> f64 {
        if self.quantum > 0.0 {
            (q / self.quantum).round() * self.quantum
        } else {
            q
        }
    }
}

/// Draws one trace from `spec`.
pub fn generate_synthetic(spec: &SyntheticCurveSpec) -> Result<ImprovementTrace> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[rng::TAG_SYNTH]);
    let mut trace = ImprovementTrace::empty(format!("synthetic-{}", spec.seed), TraceSource::Synthetic);
    let mut t: Millis = 0;
    let mut last: Option<f64> = None;
    for j in 0.. {
        t = t.saturating_add(spec.gaps.sample(j, &mut rng));
        if t > spec.horizon {
            break;
        }
        let q = spec.discretise(spec.curve(t as f64));
        if last.is_none_or(|l| q < l) {
            trace.push(Point::new(t, q))?;
            last = Some(q);
        }
    }
    Ok(trace)
}

/// Per-run parameter spread for datasets: each run draws `q_inf`,
/// `amplitude` and `decay` uniformly within `± spread` of the base values.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CurveJitter {
    pub q_inf: f64,
    pub amplitude: f64,
    pub decay: f64,
}

/// `runs` traces around `base`; run `i` is written as `run<i>`.
pub fn generate_synthetic_dataset(
    instance_name: &str,
    base: &SyntheticCurveSpec,
    runs: usize,
    jitter: &CurveJitter,
    seed: u64,
) -> Result<TraceDataset> {
    base.validate()?;
    let mut traces = Vec::with_capacity(runs);
    for i in 0..runs {
        let mut r = rng::stream(seed, &[rng::TAG_SYNTH, i as u64]);
        let mut spread = |centre: f64, s: f64| {
            if s > 0.0 {
                centre + r.random_range(-s..=s)
            } else {
                centre
            }
        };
        let spec = SyntheticCurveSpec {
            q_inf: spread(base.q_inf, jitter.q_inf),
            amplitude: spread(base.amplitude, jitter.amplitude),
            decay: spread(base.decay, jitter.decay),
            seed: rng::derive_seed(seed, &[rng::TAG_SYNTH, i as u64, 1]),
            ..*base
        };
        let mut trace = generate_synthetic(&spec)?;
        trace.set_run_id(format!("run{i:05}"));
        traces.push(trace);
    }
    let mut dataset = TraceDataset::new(instance_name, traces);
    dataset.quality_bound = Some(base.q_inf - jitter.q_inf.max(0.0));
    dataset.run_budget = Some(base.horizon);
    Ok(dataset)
}
