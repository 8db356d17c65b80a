//! Polynomial quality curves, fitted directly or by least squares.
//!
//! Coefficients are kept in a centred and scaled basis
//! `u = (x - center) / scale`; raw-time inputs in the thousands would
//! otherwise make cubic Vandermonde systems badly conditioned.

use super::lm::{self, LmOptions, LmReport};
use super::FitError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FitMethod {
    Direct,
    LevenbergMarquardt,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialModel {
    pub degree: usize,
    /// Ascending powers of `u`.
    pub coefficients: Vec<f64>,
    pub center: f64,
    pub scale: f64,
    pub method: FitMethod,
}

impl PolynomialModel {
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    /// Coefficients of the same curve in ascending powers of `x`.
    pub fn monomial_coefficients(&self) -> Vec<f64> {
        let n = self.coefficients.len();
        let mut out = vec![0.0; n];
        // c_j ((x - a) / s)^j = c_j / s^j * sum_i binom(j, i) x^i (-a)^(j-i)
        for (j, &c) in self.coefficients.iter().enumerate() {
            let factor = c / self.scale.powi(j as i32);
            let mut binom = 1.0;
            for (i, slot) in out.iter_mut().enumerate().take(j + 1) {
                *slot += factor * binom * (-self.center).powi((j - i) as i32);
                binom = binom * (j - i) as f64 / (i + 1) as f64;
            }
        }
        out
    }

    pub fn residual_ssr(&self, pairs: &[(f64, f64)]) -> f64 {
        pairs.iter().map(|&(x, y)| (self.eval(x) - y).powi(2)).sum()
    }
}

fn normalisation(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count().max(1) as f64;
    let center = xs.clone().sum::<f64>() / n;
    let scale = xs.map(|x| (x - center).abs()).fold(0.0, f64::max);
    (center, if scale > 0.0 { scale } else { 1.0 })
}

/// Solves `a x = b` in place by Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let norm = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= norm * 1e-13 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                let (upper, lower) = a.split_at_mut(row);
                for (x, p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                    *x -= f * p;
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Interpolates the `degree + 1` most recent pairs exactly.
pub fn fit_direct(pairs: &[(f64, f64)], degree: usize) -> Result<PolynomialModel, FitError> {
    let need = degree + 1;
    if pairs.len() < need {
        return Err(FitError::TooFewPoints {
            need,
            got: pairs.len(),
        });
    }
    let pts = &pairs[pairs.len() - need..];
    for (i, a) in pts.iter().enumerate() {
        if pts[i + 1..].iter().any(|b| b.0 == a.0) {
            return Err(FitError::Degenerate);
        }
    }
    let (center, scale) = normalisation(pts.iter().map(|p| p.0));
    let matrix: Vec<Vec<f64>> = pts
        .iter()
        .map(|&(x, _)| {
            let u = (x - center) / scale;
            (0..need).map(|j| u.powi(j as i32)).collect()
        })
        .collect();
    let rhs: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let coefficients = solve_dense(matrix, rhs).ok_or(FitError::Degenerate)?;
    Ok(PolynomialModel {
        degree,
        coefficients,
        center,
        scale,
        method: FitMethod::Direct,
    })
}

/// Least-squares fit by Levenberg–Marquardt from zero coefficients.
pub fn fit_lm(pairs: &[(f64, f64)], degree: usize) -> Result<PolynomialModel, FitError> {
    fit_lm_with(pairs, degree, &LmOptions::default()).map(|(m, _)| m)
}

pub fn fit_lm_with(
    pairs: &[(f64, f64)],
    degree: usize,
    options: &LmOptions,
) -> Result<(PolynomialModel, LmReport), FitError> {
    if pairs.len() < 2 {
        return Err(FitError::TooFewPoints {
            need: 2,
            got: pairs.len(),
        });
    }
    let (center, scale) = normalisation(pairs.iter().map(|p| p.0));
    let us: Vec<f64> = pairs.iter().map(|p| (p.0 - center) / scale).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let n = degree + 1;
    let jacobian: Vec<Vec<f64>> = us
        .iter()
        .map(|&u| (0..n).map(|j| u.powi(j as i32)).collect())
        .collect();
    let residuals = |c: &[f64]| -> Vec<f64> {
        us.iter()
            .zip(&ys)
            .map(|(&u, &y)| c.iter().rev().fold(0.0, |acc, &cj| acc * u + cj) - y)
            .collect()
    };
    let report = lm::minimize(residuals, |_| jacobian.clone(), vec![0.0; n], options)?;
    Ok((
        PolynomialModel {
            degree,
            coefficients: report.params.clone(),
            center,
            scale,
            method: FitMethod::LevenbergMarquardt,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_line() {
        let m = fit_direct(&[(1.0, 10.0), (3.0, 6.0)], 1).unwrap();
        let c = m.monomial_coefficients();
        assert!((c[0] - 12.0).abs() < 1e-12 && (c[1] + 2.0).abs() < 1e-12, "{c:?}");
        assert!((m.eval(5.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_parabola() {
        let m = fit_direct(&[(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)], 2).unwrap();
        let c = m.monomial_coefficients();
        for (got, want) in c.iter().zip([1.0, -2.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{c:?}");
        }
    }

    #[test]
    fn direct_uses_most_recent_points() {
        let pairs = [(0.0, 100.0), (1.0, 3.0), (2.0, 5.0)];
        let m = fit_direct(&pairs, 1).unwrap();
        assert!((m.eval(3.0) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_x_is_degenerate() {
        assert_eq!(
            fit_direct(&[(1.0, 2.0), (1.0, 3.0)], 1),
            Err(FitError::Degenerate)
        );
        assert!(matches!(
            fit_direct(&[(1.0, 2.0)], 1),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn lm_constant_data() {
        let pairs: Vec<(f64, f64)> = (1..=10).map(|x| (x as f64, 42.5)).collect();
        for degree in 1..=3 {
            let m = fit_lm(&pairs, degree).unwrap();
            for x in [-5.0, 0.0, 3.3, 10.0, 17.0] {
                assert!((m.eval(x) - 42.5).abs() < 1e-9, "deg {degree} x {x}: {}", m.eval(x));
            }
        }
    }

    #[test]
    fn lm_recovers_noiseless_cubic() {
        let truth = [3.0, -1.5, 0.25, -0.02];
        let pairs: Vec<(f64, f64)> = (1..=10)
            .map(|x| {
                let x = x as f64;
                (x, truth.iter().rev().fold(0.0, |a, c| a * x + c))
            })
            .collect();
        let m = fit_lm(&pairs, 3).unwrap();
        for (got, want) in m.monomial_coefficients().iter().zip(truth) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn lm_never_worse_than_start() {
        let pairs = [(1.0, 5.0), (2.0, 1.0), (4.0, 3.0), (7.0, -2.0), (8.0, 9.0)];
        for degree in 1..=3 {
            let (m, report) = fit_lm_with(&pairs, degree, &LmOptions::default()).unwrap();
            let start: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
            assert!(m.residual_ssr(&pairs) <= start);
            assert!(report.ssr_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    proptest! {
        #[test]
        fn monomial_expansion_agrees(c in prop::collection::vec(-5.0f64..5.0, 4), center in -3.0f64..3.0, scale in 0.5f64..4.0, x in -5.0f64..5.0) {
            let m = PolynomialModel { degree: 3, coefficients: c, center, scale, method: FitMethod::Direct };
            let mono = m.monomial_coefficients();
            let direct = mono.iter().rev().fold(0.0, |a, c| a * x + c);
            prop_assert!((direct - m.eval(x)).abs() <= 1e-8 * (1.0 + m.eval(x).abs()));
        }

        #[test]
        fn lm_accepted_steps_never_increase_ssr(
            ys in prop::collection::vec(-1e4f64..1e4, 2..12),
            degree in 1usize..4,
        ) {
            let pairs: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64 * 7.0 + 1.0, y)).collect();
            let (_, report) = fit_lm_with(&pairs, degree, &LmOptions::default()).unwrap();
            prop_assert!(report.ssr_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
