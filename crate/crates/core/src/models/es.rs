//! Derivative-free minimisers used to train perceptrons.
//!
//! Both strategies evaluate the initial mean first, then sample generations
//! of `λ = 4 + ⌊3 ln d⌋` candidates, and stop the moment the evaluation
//! budget is spent (a partial last generation is evaluated but not used for
//! adaptation). The best candidate ever evaluated is returned.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trainer {
    /// Separable CMA-ES (diagonal covariance).
    SepCmaEs,
    /// `(μ/μ, λ)`-ES with cumulative step-size adaptation.
    Csa,
}

#[derive(Clone, Debug)]
pub struct EsOptions {
    pub max_evaluations: usize,
    pub initial_sigma: f64,
}

impl Default for EsOptions {
    fn default() -> Self {
        EsOptions {
            max_evaluations: 400,
            initial_sigma: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EsOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// Best-so-far value after each evaluation.
    pub best_history: Vec<f64>,
}

pub fn population_size(dim: usize) -> usize {
    4 + (3.0 * (dim.max(1) as f64).ln()).floor() as usize
}

fn recombination_weights(lambda: usize) -> (usize, Vec<f64>, f64) {
    let mu = lambda / 2;
    let raw: Vec<f64> = (1..=mu)
        .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.into_iter().map(|v| v / sum).collect();
    let mu_eff = 1.0 / w.iter().map(|v| v * v).sum::<f64>();
    (mu, w, mu_eff)
}

struct Tracker<'f, F> {
    f: &'f mut F,
    max: usize,
    evaluations: usize,
    best: Vec<f64>,
    best_value: f64,
    history: Vec<f64>,
}

impl<F: FnMut(&[f64]) -> f64> Tracker<'_, F> {
    fn exhausted(&self) -> bool {
        self.evaluations >= self.max
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        debug_assert!(!self.exhausted());
        let mut v = (self.f)(x);
        if v.is_nan() {
            v = f64::INFINITY;
        }
        self.evaluations += 1;
        if v < self.best_value || self.best.is_empty() {
            self.best_value = v;
            self.best = x.to_vec();
        }
        self.history.push(self.best_value);
        v
    }

    fn finish(self) -> EsOutcome {
        EsOutcome {
            best: self.best,
            best_value: self.best_value,
            evaluations: self.evaluations,
            best_history: self.history,
        }
    }
}

fn expected_norm(n: f64) -> f64 {
    n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
}

/// Separable CMA-ES: CMA-ES restricted to a diagonal covariance, with the
/// covariance learning rate raised by `(d + 2) / 3`.
pub fn sep_cma_es<F>(mut f: F, x0: &[f64], options: &EsOptions, rng: &mut StreamRng) -> EsOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let mut t = Tracker {
        f: &mut f,
        max: options.max_evaluations.max(1),
        evaluations: 0,
        best: Vec::new(),
        best_value: f64::INFINITY,
        history: Vec::new(),
    };
    t.eval(x0);
    if n == 0 {
        return t.finish();
    }

    let lambda = population_size(n);
    let (mu, weights, mu_eff) = recombination_weights(lambda);
    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = 4.0 / (nf + 4.0);
    let mu_cov = mu_eff;
    let c_cov_full = (1.0 / mu_cov) * 2.0 / (nf + 2f64.sqrt()).powi(2)
        + (1.0 - 1.0 / mu_cov) * ((2.0 * mu_eff - 1.0) / ((nf + 2.0).powi(2) + mu_eff)).min(1.0);
    let c_cov = (c_cov_full * (nf + 2.0) / 3.0).min(1.0);
    let chi_n = expected_norm(nf);

    let mut mean = x0.to_vec();
    let mut sigma = options.initial_sigma;
    let mut diag = vec![1.0f64; n];
    let mut p_sigma = vec![0.0; n];
    let mut p_c = vec![0.0; n];
    let mut generation = 0usize;

    while !t.exhausted() {
        generation += 1;
        let mut pop: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            if t.exhausted() {
                return t.finish();
            }
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = z.iter().zip(&diag).map(|(zi, ci)| zi * ci.sqrt()).collect();
            let x: Vec<f64> = mean.iter().zip(&y).map(|(m, yi)| m + sigma * yi).collect();
            let v = t.eval(&x);
            pop.push((v, z, y));
        }
        pop.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut y_w = vec![0.0; n];
        let mut z_w = vec![0.0; n];
        for (w, (_, z, y)) in weights.iter().zip(&pop[..mu]) {
            for j in 0..n {
                y_w[j] += w * y[j];
                z_w[j] += w * z[j];
            }
        }
        for j in 0..n {
            mean[j] += sigma * y_w[j];
        }
        let cs = (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
        for j in 0..n {
            p_sigma[j] = (1.0 - c_sigma) * p_sigma[j] + cs * z_w[j];
        }
        let ps_norm = p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h_sigma = ps_norm
            / (1.0 - (1.0 - c_sigma).powi(2 * generation as i32)).sqrt()
            / chi_n
            < 1.4 + 2.0 / (nf + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };
        let cc = (c_c * (2.0 - c_c) * mu_eff).sqrt();
        for j in 0..n {
            p_c[j] = (1.0 - c_c) * p_c[j] + h * cc * y_w[j];
        }
        for j in 0..n {
            let rank_mu: f64 = weights
                .iter()
                .zip(&pop[..mu])
                .map(|(w, (_, _, y))| w * y[j] * y[j])
                .sum();
            diag[j] = (1.0 - c_cov) * diag[j]
                + (c_cov / mu_cov) * (p_c[j] * p_c[j] + (1.0 - h) * c_c * (2.0 - c_c) * diag[j])
                + c_cov * (1.0 - 1.0 / mu_cov) * rank_mu;
            diag[j] = diag[j].clamp(1e-20, 1e20);
        }
        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();
        sigma = sigma.clamp(1e-20, 1e20);
    }
    t.finish()
}

/// `(μ/μ, λ)`-ES with isotropic mutations and cumulative step-size
/// adaptation, `c = 1/√d`, `D = √d`.
pub fn csa_es<F>(mut f: F, x0: &[f64], options: &EsOptions, rng: &mut StreamRng) -> EsOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let mut t = Tracker {
        f: &mut f,
        max: options.max_evaluations.max(1),
        evaluations: 0,
        best: Vec::new(),
        best_value: f64::INFINITY,
        history: Vec::new(),
    };
    t.eval(x0);
    if n == 0 {
        return t.finish();
    }

    let lambda = population_size(n);
    let mu = lambda / 2;
    let c = 1.0 / nf.sqrt();
    let damping = nf.sqrt();
    let mut mean = x0.to_vec();
    let mut sigma = options.initial_sigma;
    let mut s = vec![0.0; n];

    while !t.exhausted() {
        let mut pop: Vec<(f64, Vec<f64>)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            if t.exhausted() {
                return t.finish();
            }
            let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let x: Vec<f64> = mean.iter().zip(&z).map(|(m, zi)| m + sigma * zi).collect();
            let v = t.eval(&x);
            pop.push((v, z));
        }
        pop.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut z_avg = vec![0.0; n];
        for (_, z) in &pop[..mu] {
            for j in 0..n {
                z_avg[j] += z[j] / mu as f64;
            }
        }
        let gain = (mu as f64 * c * (2.0 - c)).sqrt();
        for j in 0..n {
            mean[j] += sigma * z_avg[j];
            s[j] = (1.0 - c) * s[j] + gain * z_avg[j];
        }
        let s2: f64 = s.iter().map(|v| v * v).sum();
        sigma *= ((s2 - nf) / (2.0 * damping * nf)).exp();
        sigma = sigma.clamp(1e-20, 1e20);
    }
    t.finish()
}

pub fn minimize<F>(
    trainer: Trainer,
    f: F,
    x0: &[f64],
    options: &EsOptions,
    rng: &mut StreamRng,
) -> EsOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    match trainer {
        Trainer::SepCmaEs => sep_cma_es(f, x0, options, rng),
        Trainer::Csa => csa_es(f, x0, options, rng),
    }
}
