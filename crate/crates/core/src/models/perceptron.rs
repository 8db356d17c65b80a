//! Single-input, single-output perceptrons with at most one hidden layer.
//!
//! Weight layout for `n >= 1` hidden nodes: input weights `w[0..n]`, hidden
//! biases `w[n..2n]`, output weights `w[2n..3n]`, output bias `w[3n]`. For
//! `n = 0` the vector is `[slope, bias]`. The output layer is always linear.

use super::es::{self, EsOptions, EsOutcome, Trainer};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    /// Heaviside: 0 below zero, 1 otherwise.
    Step,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Step => {
                if x < 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

pub fn weight_count(hidden: usize) -> usize {
    if hidden == 0 {
        2
    } else {
        3 * hidden + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerceptronModel {
    pub hidden: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
}

impl PerceptronModel {
    pub fn zero(hidden: usize, activation: Activation) -> Self {
        PerceptronModel {
            hidden,
            activation,
            weights: vec![0.0; weight_count(hidden)],
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        evaluate(self.hidden, self.activation, &self.weights, x)
    }

    pub fn mse(&self, pairs: &[(f64, f64)]) -> f64 {
        mse(self.hidden, self.activation, &self.weights, pairs)
    }
}

fn evaluate(n: usize, act: Activation, w: &[f64], x: f64) -> f64 {
    if n == 0 {
        return w[0] * x + w[1];
    }
    let mut out = w[3 * n];
    for j in 0..n {
        out += w[2 * n + j] * act.apply(w[j] * x + w[n + j]);
    }
    out
}

fn mse(n: usize, act: Activation, w: &[f64], pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .iter()
        .map(|&(x, y)| (evaluate(n, act, w, x) - y).powi(2))
        .sum::<f64>()
        / pairs.len() as f64
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: PerceptronModel,
    pub mse: f64,
    pub evaluations: usize,
    pub best_history: Vec<f64>,
}

/// Minimises the mean squared error over `pairs`, starting from the zero
/// network with step size 1.
pub fn train(
    pairs: &[(f64, f64)],
    hidden: usize,
    activation: Activation,
    trainer: Trainer,
    max_evaluations: usize,
    rng: &mut StreamRng,
) -> TrainReport {
    let dim = weight_count(hidden);
    let options = EsOptions {
        max_evaluations,
        initial_sigma: 1.0,
    };
    let EsOutcome {
        best,
        best_value,
        evaluations,
        best_history,
    } = es::minimize(
        trainer,
        |w| mse(hidden, activation, w, pairs),
        &vec![0.0; dim],
        &options,
        rng,
    );
    TrainReport {
        model: PerceptronModel {
            hidden,
            activation,
            weights: best,
        },
        mse: best_value,
        evaluations,
        best_history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn linear_perceptron() {
        let m = PerceptronModel {
            hidden: 0,
            activation: Activation::Tanh,
            weights: vec![2.0, 1.0],
        };
        assert_eq!(m.eval(3.0), 7.0);
    }

    #[test]
    fn zero_network_is_zero() {
        let m = PerceptronModel::zero(1, Activation::Tanh);
        for x in [-10.0, 0.0, 0.5, 1e6] {
            assert_eq!(m.eval(x), 0.0);
        }
    }

    #[test]
    fn step_activation() {
        assert_eq!(Activation::Step.apply(-1e-9), 0.0);
        assert_eq!(Activation::Step.apply(0.0), 1.0);
        assert_eq!(Activation::Step.apply(3.0), 1.0);
    }

    // Written out per node rather than through the flat-vector loop.
    fn reference_p2(w: &[f64], act: Activation, x: f64) -> f64 {
        let (w1, w2, b1, b2, v1, v2, c) = (w[0], w[1], w[2], w[3], w[4], w[5], w[6]);
        let a = |z: f64| match act {
            Activation::Tanh => (z.exp() - (-z).exp()) / (z.exp() + (-z).exp()),
            Activation::Step => (z >= 0.0) as u8 as f64,
        };
        v1 * a(w1 * x + b1) + v2 * a(w2 * x + b2) + c
    }

    #[test]
    fn two_hidden_matches_reference() {
        let mut r = rng::stream(11, &[]);
        for act in [Activation::Tanh, Activation::Step] {
            let weights: Vec<f64> = (0..7).map(|_| r.random_range(-2.0..2.0)).collect();
            let m = PerceptronModel {
                hidden: 2,
                activation: act,
                weights: weights.clone(),
            };
            for _ in 0..100 {
                let x: f64 = r.random_range(-3.0..3.0);
                let want = reference_p2(&weights, act, x);
                assert!((m.eval(x) - want).abs() < 1e-12, "{act:?} x={x}");
            }
        }
    }

    #[test]
    fn weight_counts() {
        assert_eq!(weight_count(0), 2);
        assert_eq!(weight_count(1), 4);
        assert_eq!(weight_count(3), 10);
    }

    #[test]
    fn training_is_deterministic_and_bounded() {
        let pairs: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 / 10.0, 1.0 - i as f64 / 20.0)).collect();
        for trainer in [Trainer::SepCmaEs, Trainer::Csa] {
            let a = train(&pairs, 2, Activation::Tanh, trainer, 400, &mut rng::stream(5, &[1]));
            let b = train(&pairs, 2, Activation::Tanh, trainer, 400, &mut rng::stream(5, &[1]));
            assert_eq!(a.model, b.model);
            assert!(a.evaluations <= 400);
            assert!(a.mse < PerceptronModel::zero(2, Activation::Tanh).mse(&pairs));
            assert!(a.best_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn single_evaluation_returns_the_zero_network() {
        let pairs = [(1.0, 2.0)];
        let r = train(&pairs, 1, Activation::Tanh, Trainer::SepCmaEs, 1, &mut rng::stream(0, &[]));
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.model.weights, vec![0.0; 4]);
    }
}
