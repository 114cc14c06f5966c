use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_TOL: f64 = 1e-10;

/// LASSO fit on standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct LassoModel {
    /// Coefficients of the standardized features.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub means: Vec<f64>,
    /// Population standard deviations; 0 marks a constant feature.
    pub scales: Vec<f64>,
    pub sweeps: usize,
    /// Objective after every coordinate sweep.
    pub objective_history: Vec<f64>,
}

impl LassoModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + x.iter()
                .zip(&self.means)
                .zip(&self.scales)
                .zip(&self.coefficients)
                .filter(|(((_, _), &s), _)| s > 0.0)
                .map(|(((&v, &m), &s), &b)| b * (v - m) / s)
                .sum::<f64>()
    }
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Standardized columns (column-major), means and scales.
fn standardize(x: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let k = x[0].len();
    let mut cols = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut scales = Vec::with_capacity(k);
    for j in 0..k {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        // treat spreads at rounding level as constant
        let sd = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 0.0 };
        cols.push(if sd > 0.0 {
            x.iter().map(|r| (r[j] - mean) / sd).collect()
        } else {
            vec![0.0; x.len()]
        });
        means.push(mean);
        scales.push(sd);
    }
    (cols, means, scales)
}

fn objective(residual: &[f64], beta: &[f64], alpha: f64) -> f64 {
    let n = residual.len() as f64;
    residual.iter().map(|r| r * r).sum::<f64>() / (2.0 * n) + alpha * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Minimizes `(1/2n)‖y − Zβ − b‖² + α‖β‖₁` over standardized features `Z` by
/// cyclic coordinate descent; stops when no coefficient moves by `tol` or
/// more in a sweep.
pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], alpha: f64, max_iter: usize, tol: f64) -> Result<LassoModel> {
    if x.len() != y.len() {
        return Err(Error::Input(format!("{} feature rows for {} targets", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Input(format!("{} samples; need at least 2", x.len())));
    }
    let k = x[0].len();
    if k == 0 || x.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidShape("feature rows must share a positive length".into()));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be ≥ 0, got {alpha}")));
    }
    let n = x.len() as f64;
    let (cols, means, scales) = standardize(x);
    let intercept = y.iter().sum::<f64>() / n;
    let mut residual: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    let mut beta = vec![0.0; k];
    let mut history = Vec::new();
    let mut max_change = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_iter {
        sweeps += 1;
        max_change = 0.0f64;
        for j in 0..k {
            if scales[j] == 0.0 {
                continue;
            }
            let col = &cols[j];
            let rho = col.iter().zip(&residual).map(|(z, r)| z * r).sum::<f64>() / n + beta[j];
            let next = soft_threshold(rho, alpha);
            let delta = next - beta[j];
            if delta != 0.0 {
                for (r, z) in residual.iter_mut().zip(col) {
                    *r -= z * delta;
                }
                beta[j] = next;
            }
            max_change = max_change.max(delta.abs());
        }
        history.push(objective(&residual, &beta, alpha));
        if max_change < tol {
            return Ok(LassoModel {
                coefficients: beta,
                intercept,
                alpha,
                means,
                scales,
                sweeps,
                objective_history: history,
            });
        }
    }
    Err(Error::Convergence {
        iterations: sweeps,
        max_change,
    })
}

/// Objective of a fitted model on its training data.
pub fn lasso_objective(model: &LassoModel, x: &[Vec<f64>], y: &[f64]) -> f64 {
    let residual: Vec<f64> = x.iter().zip(y).map(|(r, v)| v - model.predict(r)).collect();
    objective(&residual, &model.coefficients, model.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_single_feature() {
        let x = vec![vec![1.0], vec![-1.0]];
        let y = [2.0, -2.0];
        let fit = |a| fit_lasso(&x, &y, a, 100, 1e-12).unwrap().coefficients[0];
        assert!((fit(0.0) - 2.0).abs() < 1e-9);
        assert!((fit(0.5) - 1.5).abs() < 1e-9);
        assert_eq!(fit(2.0), 0.0);
        assert_eq!(fit(3.0), 0.0);
    }

    #[test]
    fn alpha_zero_matches_least_squares() {
        // y = 1 + 2·x0 − x1 exactly
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0], vec![3.0, 1.0], vec![1.0, 3.0]];
        let y: Vec<f64> = x.iter().map(|r| 1.0 + 2.0 * r[0] - r[1]).collect();
        let m = fit_lasso(&x, &y, 0.0, DEFAULT_MAX_ITER, 1e-13).unwrap();
        for (r, v) in x.iter().zip(&y) {
            assert!((m.predict(r) - v).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_feature_gets_zero() {
        let x = vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 4.0]];
        let y = [1.0, 2.0, 4.0];
        let m = fit_lasso(&x, &y, 0.01, 1000, 1e-12).unwrap();
        assert_eq!(m.coefficients[0], 0.0);
        assert_eq!(m.scales[0], 0.0);
    }

    #[test]
    fn objective_never_increases() {
        let x = vec![vec![0.1, 0.9, 0.3], vec![0.5, 0.2, 0.8], vec![0.9, 0.4, 0.1], vec![0.3, 0.3, 0.6]];
        let y = [0.0, 1.0, 3.0, 2.0];
        let m = fit_lasso(&x, &y, 0.05, DEFAULT_MAX_ITER, 1e-12).unwrap();
        for w in m.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let x = vec![vec![0.0, 0.1], vec![1.0, 1.1], vec![2.0, 1.9], vec![3.0, 3.2]];
        let y = [0.0, 1.0, 2.0, 3.0];
        assert!(matches!(fit_lasso(&x, &y, 0.0, 1, 1e-12), Err(Error::Convergence { iterations: 1, .. })));
    }
}
