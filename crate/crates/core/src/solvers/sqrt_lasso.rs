//! Square-root Lasso `‖y − Xβ‖₂/√n + λ‖β‖₁` via the scaled-Lasso alternation.

use serde::{Deserialize, Serialize};

use super::lasso::{cd_kernel, unstandardize, CdFit, LassoOptions};
use super::standardize::{center, Standardized};
use crate::error::{Error, Result};
use crate::numerics::{check_vector, dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqrtLassoOptions {
    pub lasso: LassoOptions,
    /// Stop once `|Δσ̂| ≤ sigma_tol · σ̂`.
    pub sigma_tol: f64,
    pub max_outer: usize,
}

impl Default for SqrtLassoOptions {
    fn default() -> Self {
        SqrtLassoOptions {
            lasso: LassoOptions::default(),
            sigma_tol: 1e-9,
            max_outer: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqrtLassoSolution {
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub residuals: Vec<f64>,
    /// `‖r‖₂/√n`.
    pub sigma_hat: f64,
    /// Outer (σ̂ update) iterations.
    pub iterations: usize,
    /// Stationarity violation of the square-root objective.
    pub kkt_gap: f64,
}

const COLLAPSE: f64 = 1e-10;

pub(crate) struct SqrtFit {
    pub fit: CdFit,
    pub sigma: f64,
    pub outer: usize,
    pub kkt_gap: f64,
}

fn sqrt_kkt(design: &Standardized, columns: &[usize], coef: &[f64], residual: &[f64], lambda: f64) -> f64 {
    let n = design.n() as f64;
    let rnorm = dot(residual, residual).sqrt();
    columns
        .iter()
        .zip(coef)
        .map(|(&c, &b)| {
            let g = dot(design.col(c), residual) / (n.sqrt() * rnorm);
            if b == 0.0 {
                (g.abs() - lambda).max(0.0)
            } else {
                (g - lambda * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

pub(crate) fn sqrt_kernel(
    design: &Standardized,
    columns: &[usize],
    y_centered: &[f64],
    lambda: f64,
    opts: &SqrtLassoOptions,
) -> Result<SqrtFit> {
    let n = design.n() as f64;
    let mut sigma = (dot(y_centered, y_centered) / n).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(
            "square-root lasso needs a response that is not identically zero".into(),
        ));
    }
    // σ̂ is the fixed point of T(σ) = ‖r(2λσ)‖/√n. T is nondecreasing and
    // T(sd(y)) ≤ sd(y), so the start is an upper bracket; plain iteration of
    // T is slow when T' ≈ 1, hence a bracketed (Illinois) secant on T(σ) − σ.
    let mut warm: Option<Vec<f64>> = None;
    let mut hi: Option<(f64, f64)> = None; // (σ, T(σ) − σ ≤ 0)
    let mut lo: Option<(f64, f64)> = None; // (σ, T(σ) − σ > 0)
    let mut prev_hi: Option<(f64, f64)> = None;
    let mut side = 0i8;
    let y_scale = sigma.max(1.0);
    for outer in 1..=opts.max_outer {
        // The square-root KKT gap is about the Lasso gap over 2σ, so the
        // inner solve tightens as σ shrinks.
        let shrink = (sigma / y_scale).clamp(1e-4, 1.0);
        let inner = LassoOptions {
            tol: opts.lasso.tol * shrink,
            kkt_tol: opts.lasso.kkt_tol * shrink,
            ..opts.lasso
        };
        let fit = cd_kernel(
            design,
            columns,
            y_centered,
            2.0 * lambda * sigma,
            warm.as_deref(),
            &inner,
            None,
        )?;
        let next = (dot(&fit.residual, &fit.residual) / n).sqrt();
        if next < COLLAPSE {
            return Err(Error::ResidualCollapse { sigma: next });
        }
        let kkt_gap = sqrt_kkt(design, columns, &fit.coef, &fit.residual, lambda);
        if (next - sigma).abs() <= opts.sigma_tol * next || kkt_gap <= 0.5 * opts.lasso.kkt_tol {
            return Ok(SqrtFit {
                fit,
                sigma: next,
                outer,
                kkt_gap,
            });
        }
        let g = next - sigma;
        if g < 0.0 {
            if side == -1 {
                if let Some(l) = lo.as_mut() {
                    l.1 *= 0.5;
                }
            }
            prev_hi = hi;
            hi = Some((sigma, g));
            side = -1;
        } else {
            if side == 1 {
                if let Some(h) = hi.as_mut() {
                    h.1 *= 0.5;
                }
            }
            lo = Some((sigma, g));
            side = 1;
        }
        sigma = match (lo, hi) {
            (Some((a, ga)), Some((b, gb))) => {
                let c = a - ga * (b - a) / (gb - ga);
                if c > a && c < b {
                    c
                } else {
                    0.5 * (a + b)
                }
            }
            // Only upper points so far: secant through the last two, which
            // may overshoot and so produce a lower bracket; else the plain
            // step, safe since T(σ) ∈ [σ̂, σ] above the fixed point.
            (None, Some((b, gb))) => match prev_hi {
                Some((a, ga)) if gb != ga => {
                    let c = b - gb * (b - a) / (gb - ga);
                    if c > 0.0 && c < next {
                        c
                    } else {
                        next
                    }
                }
                _ => next,
            },
            _ => next,
        };
        warm = Some(fit.coef);
    }
    Err(Error::NotConverged {
        solver: "square-root lasso",
        iterations: opts.max_outer,
        gap: f64::NAN,
    })
}

pub fn sqrt_lasso(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    opts: &SqrtLassoOptions,
) -> Result<SqrtLassoSolution> {
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
    let design = Standardized::new(x)?;
    let (yc, y_mean) = center(y);
    let cols: Vec<usize> = (0..x.cols()).collect();
    let out = sqrt_kernel(&design, &cols, &yc, lambda, opts)?;
    let (beta, intercept, residuals) = unstandardize(&design, &cols, &out.fit.coef, x, y, y_mean);
    Ok(SqrtLassoSolution {
        beta,
        intercept,
        lambda,
        residuals,
        sigma_hat: out.sigma,
        iterations: out.outer,
        kkt_gap: out.kkt_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{norm2, sample_mvn, RngState};

    #[test]
    fn zero_solution_threshold() {
        let x = sample_mvn(RngState::new(11, 0), 50, &Matrix::identity(5)).unwrap();
        let y: Vec<f64> = (0..50).map(|i| x[(i, 2)] + 0.3 * x[(i, 0)]).collect();
        let design = Standardized::new(&x).unwrap();
        let (yc, _) = center(&y);
        let n = 50f64;
        let thr = (0..5)
            .map(|j| dot(design.col(j), &yc).abs())
            .fold(0.0, f64::max)
            / (n.sqrt() * norm2(&yc));
        let sol = sqrt_lasso(&x, &y, thr, &SqrtLassoOptions::default()).unwrap();
        assert!(sol.beta.iter().all(|b| *b == 0.0));
        assert!((sol.sigma_hat - norm2(&yc) / n.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_response_rejected() {
        let x = sample_mvn(RngState::new(12, 0), 20, &Matrix::identity(3)).unwrap();
        assert!(sqrt_lasso(&x, &vec![1.0; 20], 0.1, &SqrtLassoOptions::default()).is_err());
    }

    #[test]
    fn interpolation_is_reported() {
        let x = sample_mvn(RngState::new(13, 0), 10, &Matrix::identity(30)).unwrap();
        let y = crate::numerics::sample_normal(RngState::new(13, 1), 10, 1.0);
        match sqrt_lasso(&x, &y, 1e-4, &SqrtLassoOptions::default()) {
            Err(Error::ResidualCollapse { .. }) | Err(Error::NotConverged { .. }) => {}
            other => panic!("expected collapse, got {other:?}"),
        }
    }
}
