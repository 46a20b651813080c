//! Cyclic coordinate descent for `‖y − Xβ‖²/n + λ‖β‖₁`.

use serde::{Deserialize, Serialize};

use super::standardize::{center, Standardized};
use crate::error::{Error, Result};
use crate::numerics::{axpy, check_vector, dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Sweep stops when no standardized coefficient moves by more than this.
    pub tol: f64,
    /// Required KKT gap at termination, relative to `max(1, sd(y))`.
    pub kkt_tol: f64,
    /// Cap on coordinate sweeps (full and active-set sweeps both count).
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-7,
            kkt_tol: 1e-6,
            max_sweeps: 100_000,
        }
    }
}

impl LassoOptions {
    pub fn tight() -> Self {
        LassoOptions {
            tol: 1e-13,
            kkt_tol: 1e-11,
            max_sweeps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoSolution {
    /// Coefficients on the original column scale.
    pub beta: Vec<f64>,
    /// `mean(y) − mean(X)ᵀβ`; zero up to rounding for centered inputs.
    pub intercept: f64,
    pub lambda: f64,
    /// `y − intercept − Xβ`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// KKT violation of the standardized problem.
    pub kkt_gap: f64,
    /// Standardized objective `‖r‖²/n + λ‖b‖₁`.
    pub objective: f64,
}

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Result of the kernel on a standardized design.
#[derive(Debug, Clone)]
pub(crate) struct CdFit {
    /// Standardized coefficients, aligned with the `columns` slice given to the kernel.
    pub coef: Vec<f64>,
    pub residual: Vec<f64>,
    pub sweeps: usize,
    pub kkt_gap: f64,
}

/// `max_j |2 x̃_jᵀ y / n|` over the given columns.
pub(crate) fn lambda_max_on(design: &Standardized, columns: &[usize], y_centered: &[f64]) -> f64 {
    let n = design.n() as f64;
    columns
        .iter()
        .map(|&c| (2.0 * dot(design.col(c), y_centered) / n).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn kkt_gap_on(
    design: &Standardized,
    columns: &[usize],
    coef: &[f64],
    residual: &[f64],
    lambda: f64,
) -> f64 {
    let n = design.n() as f64;
    columns
        .iter()
        .zip(coef)
        .map(|(&c, &b)| {
            let g = 2.0 * dot(design.col(c), residual) / n;
            if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

pub(crate) fn objective_on(residual: &[f64], coef: &[f64], lambda: f64) -> f64 {
    dot(residual, residual) / residual.len() as f64 + lambda * coef.iter().map(|b| b.abs()).sum::<f64>()
}

fn sweep(
    design: &Standardized,
    columns: &[usize],
    which: &[usize],
    coef: &mut [f64],
    residual: &mut [f64],
    half_lambda: f64,
) -> f64 {
    let n = design.n() as f64;
    let mut max_change = 0.0_f64;
    for &k in which {
        let c = columns[k];
        let x = design.col(c);
        let s = design.sq_norm(c);
        let old = coef[k];
        let z = dot(x, residual) / n + s * old;
        let new = soft_threshold(z, half_lambda) / s;
        let d = new - old;
        if d != 0.0 {
            axpy(-d, x, residual);
            coef[k] = new;
            max_change = max_change.max(d.abs());
        }
    }
    max_change
}

/// Coordinate descent on `columns` of a standardized design with a centered
/// response. Full sweeps alternate with sweeps restricted to the current
/// active set until a full sweep leaves every coefficient in place and the
/// KKT gap is within tolerance.
pub(crate) fn cd_kernel(
    design: &Standardized,
    columns: &[usize],
    y_centered: &[f64],
    lambda: f64,
    warm: Option<&[f64]>,
    opts: &LassoOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<CdFit> {
    let m = columns.len();
    let mut coef = warm.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    let mut residual = y_centered.to_vec();
    for (k, &b) in coef.iter().enumerate() {
        if b != 0.0 {
            axpy(-b, design.col(columns[k]), &mut residual);
        }
    }
    let y_scale = (dot(y_centered, y_centered) / y_centered.len() as f64).sqrt().max(1.0);
    let kkt_tol = opts.kkt_tol * y_scale;
    let half = 0.5 * lambda;
    let all: Vec<usize> = (0..m).collect();
    let mut sweeps = 0;
    let mut active = Vec::with_capacity(m);
    let mut last_gap = f64::INFINITY;
    if let Some(t) = trace.as_deref_mut() {
        t.push(objective_on(&residual, &coef, lambda));
    }
    loop {
        let change = sweep(design, columns, &all, &mut coef, &mut residual, half);
        sweeps += 1;
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective_on(&residual, &coef, lambda));
        }
        if change <= opts.tol {
            last_gap = kkt_gap_on(design, columns, &coef, &residual, lambda);
            if last_gap <= kkt_tol {
                break;
            }
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::NotConverged {
                solver: "lasso coordinate descent",
                iterations: sweeps,
                gap: kkt_gap_on(design, columns, &coef, &residual, lambda).min(last_gap),
            });
        }
        active.clear();
        active.extend((0..m).filter(|&k| coef[k] != 0.0));
        loop {
            if active.is_empty() {
                break;
            }
            let change = sweep(design, columns, &active, &mut coef, &mut residual, half);
            sweeps += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(objective_on(&residual, &coef, lambda));
            }
            if change <= opts.tol {
                break;
            }
            if sweeps >= opts.max_sweeps {
                return Err(Error::NotConverged {
                    solver: "lasso coordinate descent",
                    iterations: sweeps,
                    gap: kkt_gap_on(design, columns, &coef, &residual, lambda),
                });
            }
        }
    }
    Ok(CdFit {
        coef,
        residual,
        sweeps,
        kkt_gap: last_gap,
    })
}

fn validate(x: &Matrix, y: &[f64], lambda: f64) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!(
            "{} responses for a design with {} rows",
            y.len(),
            x.rows()
        )));
    }
    check_vector(y, "response")?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// Maps standardized coefficients back and recomputes residuals on the original scale.
pub(crate) fn unstandardize(
    design: &Standardized,
    columns: &[usize],
    coef: &[f64],
    x: &Matrix,
    y: &[f64],
    y_mean: f64,
) -> (Vec<f64>, f64, Vec<f64>) {
    let beta: Vec<f64> = columns
        .iter()
        .zip(coef)
        .map(|(&c, &b)| b / design.scales()[c])
        .collect();
    let intercept = y_mean
        - columns
            .iter()
            .zip(&beta)
            .map(|(&c, &b)| design.means()[c] * b)
            .sum::<f64>();
    let mut residuals: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    for (&c, &b) in columns.iter().zip(&beta) {
        if b != 0.0 {
            axpy(-b, x.col(c), &mut residuals);
        }
    }
    (beta, intercept, residuals)
}

/// Largest useful penalty: every coefficient is zero at or above it.
pub fn lambda_max(x: &Matrix, y: &[f64]) -> Result<f64> {
    validate(x, y, 0.0)?;
    let design = Standardized::new(x)?;
    let (yc, _) = center(y);
    let cols: Vec<usize> = (0..x.cols()).collect();
    Ok(lambda_max_on(&design, &cols, &yc))
}

pub fn lasso_cd(x: &Matrix, y: &[f64], lambda: f64, opts: &LassoOptions) -> Result<LassoSolution> {
    lasso_cd_traced(x, y, lambda, opts, None)
}

/// As [`lasso_cd`], additionally recording the objective after every sweep.
pub fn lasso_cd_traced(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    opts: &LassoOptions,
    trace: Option<&mut Vec<f64>>,
) -> Result<LassoSolution> {
    validate(x, y, lambda)?;
    let design = Standardized::new(x)?;
    let (yc, y_mean) = center(y);
    let cols: Vec<usize> = (0..x.cols()).collect();
    let fit = cd_kernel(&design, &cols, &yc, lambda, None, opts, trace)?;
    let objective = objective_on(&fit.residual, &fit.coef, lambda);
    let (beta, intercept, residuals) = unstandardize(&design, &cols, &fit.coef, x, y, y_mean);
    Ok(LassoSolution {
        beta,
        intercept,
        lambda,
        residuals,
        iterations: fit.sweeps,
        kkt_gap: fit.kkt_gap,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ols_solve, sample_mvn, RngState};

    #[test]
    fn soft_threshold_values() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    fn instance(seed: u64, n: usize, p: usize) -> (Matrix, Vec<f64>) {
        let x = sample_mvn(RngState::new(seed, 0), n, &Matrix::identity(p)).unwrap();
        let mut y: Vec<f64> = (0..n).map(|i| x[(i, 0)] - 0.5 * x[(i, 1)]).collect();
        let noise = crate::numerics::sample_normal(RngState::new(seed, 1), n, 0.5);
        y.iter_mut().zip(noise).for_each(|(a, b)| *a += b);
        (x, y)
    }

    #[test]
    fn zero_above_lambda_max() {
        let (x, y) = instance(1, 40, 8);
        let lmax = lambda_max(&x, &y).unwrap();
        let sol = lasso_cd(&x, &y, lmax, &LassoOptions::default()).unwrap();
        assert!(sol.beta.iter().all(|b| *b == 0.0));
        let sol = lasso_cd(&x, &y, 0.99 * lmax, &LassoOptions::default()).unwrap();
        assert_eq!(sol.beta.iter().filter(|b| **b != 0.0).count(), 1);
    }

    #[test]
    fn unpenalized_matches_ols() {
        let (x, y) = instance(2, 60, 6);
        let sol = lasso_cd(&x, &y, 0.0, &LassoOptions::tight()).unwrap();
        // With implicit centering the oracle is OLS on centered data.
        let (yc, _) = center(&y);
        let mut xc = x.clone();
        for j in 0..x.cols() {
            let m = crate::numerics::mean(x.col(j));
            xc.col_mut(j).iter_mut().for_each(|v| *v -= m);
        }
        let ols = ols_solve(&xc, &yc).unwrap();
        for (a, b) in sol.beta.iter().zip(&ols) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn residuals_match_stored_fit() {
        let (x, y) = instance(3, 30, 10);
        let sol = lasso_cd(&x, &y, 0.1, &LassoOptions::default()).unwrap();
        let fitted = x.mul_vec(&sol.beta).unwrap();
        for i in 0..y.len() {
            assert!((y[i] - sol.intercept - fitted[i] - sol.residuals[i]).abs() < 1e-12);
        }
        assert!(sol.kkt_gap <= 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        let (x, y) = instance(4, 10, 3);
        assert!(lasso_cd(&x, &y[..9], 0.1, &LassoOptions::default()).is_err());
        assert!(lasso_cd(&x, &y, -1.0, &LassoOptions::default()).is_err());
        let mut xz = x.clone();
        xz.col_mut(1).iter_mut().for_each(|v| *v = 2.0);
        assert!(matches!(
            lasso_cd(&xz, &y, 0.1, &LassoOptions::default()),
            Err(Error::ZeroVariance(1))
        ));
    }

    #[test]
    fn reports_non_convergence() {
        let (x, y) = instance(5, 30, 20);
        let opts = LassoOptions {
            max_sweeps: 1,
            ..LassoOptions::tight()
        };
        match lasso_cd(&x, &y, 1e-3, &opts) {
            Err(Error::NotConverged { gap, .. }) => assert!(gap.is_finite()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
