//! Levenberg–Marquardt with Marquardt's diagonal scaling.
//!
//! Damping starts at `1e-3`, is divided by 10 after an accepted step and
//! multiplied by 10 after a rejected one. Iteration stops after
//! `max_iterations` or when an accepted step changes the sum of squared
//! residuals by less than `rel_tolerance` relative to its previous value.

use super::poly::solve_dense;
use super::FitError;

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            initial_damping: 1e-3,
            max_iterations: 100,
            rel_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub ssr: f64,
    pub iterations: usize,
    /// SSR at the start point followed by the SSR after every accepted step.
    pub ssr_history: Vec<f64>,
}

fn ssr(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimises `sum(residuals(p)^2)` starting at `start`.
pub fn minimize<R, J>(
    residuals: R,
    jacobian: J,
    start: Vec<f64>,
    options: &LmOptions,
) -> Result<LmReport, FitError>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    let n = start.len();
    let mut params = start;
    let mut r = residuals(&params);
    let mut cost = ssr(&r);
    if !cost.is_finite() {
        return Err(FitError::NonFinite);
    }
    let mut history = vec![cost];
    let mut lambda = options.initial_damping;
    let mut iterations = 0;

    while iterations < options.max_iterations && cost > 0.0 {
        iterations += 1;
        let jac = jacobian(&params);
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (row, &ri) in jac.iter().zip(&r) {
            for a in 0..n {
                jtr[a] += row[a] * ri;
                for b in 0..n {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        if jtj.iter().flatten().chain(&jtr).any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }

        let mut damped = jtj.clone();
        for (a, row) in damped.iter_mut().enumerate() {
            let d = if jtj[a][a] > 0.0 { jtj[a][a] } else { 1.0 };
            row[a] += lambda * d;
        }
        let rhs: Vec<f64> = jtr.iter().map(|g| -g).collect();
        let Some(step) = solve_dense(damped, rhs) else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
            continue;
        };
        let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
        let trial_r = residuals(&trial);
        let trial_cost = ssr(&trial_r);
        if trial_cost.is_finite() && trial_cost < cost {
            let rel = (cost - trial_cost) / cost;
            params = trial;
            r = trial_r;
            cost = trial_cost;
            history.push(cost);
            lambda = (lambda / 10.0).max(1e-300);
            if rel < options.rel_tolerance {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
    }

    if params.iter().any(|p| !p.is_finite()) {
        return Err(FitError::NonFinite);
    }
    Ok(LmReport {
        params,
        ssr: cost,
        iterations,
        ssr_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fits_an_exponential() {
        // y = 2 exp(-0.5 x)
        let xs: Vec<f64> = (0..12).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * (-0.5 * x).exp()).collect();
        let res = |p: &[f64]| -> Vec<f64> {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| p[0] * (p[1] * x).exp() - y)
                .collect()
        };
        let jac = |p: &[f64]| -> Vec<Vec<f64>> {
            xs.iter()
                .map(|x| vec![(p[1] * x).exp(), p[0] * x * (p[1] * x).exp()])
                .collect()
        };
        let report = minimize(res, jac, vec![1.0, 0.0], &LmOptions::default()).unwrap();
        assert!((report.params[0] - 2.0).abs() < 1e-6, "{:?}", report.params);
        assert!((report.params[1] + 0.5).abs() < 1e-6, "{:?}", report.params);
        assert!(report.ssr_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let res = |_: &[f64]| vec![f64::NAN];
        let jac = |_: &[f64]| vec![vec![1.0]];
        assert_eq!(
            minimize(res, jac, vec![0.0], &LmOptions::default()).unwrap_err(),
            FitError::NonFinite
        );
    }
}
