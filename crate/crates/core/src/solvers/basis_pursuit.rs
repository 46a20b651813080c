//! Basis pursuit `min ‖β‖₁ subject to Xβ = f` for full-row-rank `X` with `n ≤ p`.
//!
//! ADMM on the split `β = z`: the β-step is the exact affine projection
//! `v ↦ v − Xᵀ(XXᵀ)⁻¹(Xv − f)`, the z-step is soft-thresholding at `1/ρ`.
//! Once the iteration has converged, the support of `z` is re-solved exactly
//! (`X_S β_S = f`); the polished point is kept when it is feasible, agrees in
//! sign with `z` and does not increase the ℓ1 norm. Every few iterations the
//! polished point is also checked against an exact dual certificate, which
//! ends the iteration early once the optimal vertex has been found.

use serde::{Deserialize, Serialize};

use super::lasso::soft_threshold;
use crate::error::{Error, Result};
use crate::numerics::{check_vector, norm1, norm2, norm_inf, ols_solve, Cholesky, Matrix};

/// Iterations between attempts to certify the polished support.
const CERTIFY_EVERY: usize = 50;
const CERTIFICATE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisPursuitOptions {
    pub rho: f64,
    /// Absolute/relative tolerance on the ADMM primal and dual residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Required `‖Xβ − f‖∞` of the returned point.
    pub feasibility_tol: f64,
    pub polish: bool,
}

impl Default for BasisPursuitOptions {
    fn default() -> Self {
        BasisPursuitOptions {
            rho: 1.0,
            tol: 1e-9,
            max_iter: 200_000,
            feasibility_tol: 1e-6,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisPursuitSolution {
    pub beta: Vec<f64>,
    pub feasibility_gap: f64,
    pub l1_norm: f64,
    pub iterations: usize,
    pub polished: bool,
}

/// Precomputed affine projector onto `{β : Xβ = f}`.
pub struct AffineProjector<'a> {
    x: &'a Matrix,
    f: &'a [f64],
    gram: Cholesky,
}

impl<'a> AffineProjector<'a> {
    pub fn new(x: &'a Matrix, f: &'a [f64]) -> Result<Self> {
        let xt = x.transpose();
        let gram = Cholesky::new(&xt.gram()).map_err(|e| match e {
            Error::NotPositiveDefinite { index, .. } => Error::RankDeficient(format!(
                "X Xᵀ is singular (row {index} is dependent on earlier rows)"
            )),
            other => other,
        })?;
        Ok(AffineProjector { x, f, gram })
    }

    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = self.x.mul_vec(v).expect("shape checked");
        r.iter_mut().zip(self.f).for_each(|(a, b)| *a -= b);
        r
    }

    pub fn project_in_place(&self, v: &mut [f64]) {
        let r = self.residual(v);
        let w = self.gram.solve(&r).expect("shape checked");
        for j in 0..v.len() {
            v[j] -= crate::numerics::dot(self.x.col(j), &w);
        }
    }

    /// `Xᵀ(XXᵀ)⁻¹f`, the minimum-ℓ2-norm feasible point.
    pub fn min_norm_point(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.x.cols()];
        self.project_in_place(&mut v);
        v
    }
}

pub fn min_norm_solution(x: &Matrix, f: &[f64]) -> Result<Vec<f64>> {
    validate(x, f)?;
    Ok(AffineProjector::new(x, f)?.min_norm_point())
}

fn validate(x: &Matrix, f: &[f64]) -> Result<()> {
    if f.len() != x.rows() {
        return Err(Error::Dimension(format!(
            "target of length {} for {} rows",
            f.len(),
            x.rows()
        )));
    }
    check_vector(f, "target")?;
    if x.rows() > x.cols() {
        return Err(Error::RankDeficient(format!(
            "basis pursuit needs n <= p, got {}x{}",
            x.rows(),
            x.cols()
        )));
    }
    Ok(())
}

fn polish(x: &Matrix, f: &[f64], z: &[f64]) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..z.len()).filter(|&j| z[j] != 0.0).collect();
    if support.is_empty() || support.len() > x.rows() {
        return None;
    }
    let coef = ols_solve(&x.select_columns(&support), f).ok()?;
    if coef
        .iter()
        .zip(&support)
        .any(|(c, &j)| c.signum() != z[j].signum() || *c == 0.0)
    {
        return None;
    }
    let mut beta = vec![0.0; z.len()];
    for (c, &j) in coef.iter().zip(&support) {
        beta[j] = *c;
    }
    Some(beta)
}

/// Dual certificate for a polished point supported on `support` with signs
/// `s`: `ν = X_S (X_SᵀX_S)⁻¹ s` satisfies `X_Sᵀν = s`, and `|X_jᵀν| ≤ 1`
/// off the support proves the point optimal.
fn certify(x: &Matrix, support: &[usize], beta: &[f64]) -> bool {
    let xs = x.select_columns(support);
    let Ok(chol) = Cholesky::new(&xs.gram()) else {
        return false;
    };
    let signs: Vec<f64> = support.iter().map(|&j| beta[j].signum()).collect();
    let Ok(w) = chol.solve(&signs) else {
        return false;
    };
    let nu = xs.mul_vec(&w).expect("shape checked");
    let mut on = vec![false; x.cols()];
    support.iter().for_each(|&j| on[j] = true);
    (0..x.cols()).all(|j| on[j] || crate::numerics::dot(x.col(j), &nu).abs() <= 1.0 + CERTIFICATE_SLACK)
}

/// Polishes `z` and keeps the result only if it is feasible and certified optimal.
fn certified_polish(x: &Matrix, f: &[f64], z: &[f64], feasibility_tol: f64) -> Option<Vec<f64>> {
    let beta = polish(x, f, z)?;
    let r = x.mul_vec(&beta).ok()?;
    let gap = r.iter().zip(f).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    (gap <= feasibility_tol && certify(x, &support, &beta)).then_some(beta)
}

pub fn basis_pursuit(x: &Matrix, f: &[f64], opts: &BasisPursuitOptions) -> Result<BasisPursuitSolution> {
    validate(x, f)?;
    let proj = AffineProjector::new(x, f)?;
    let p = x.cols();
    let feasibility = |b: &[f64]| norm_inf(&proj.residual(b));

    if norm_inf(f) == 0.0 {
        return Ok(BasisPursuitSolution {
            beta: vec![0.0; p],
            feasibility_gap: 0.0,
            l1_norm: 0.0,
            iterations: 0,
            polished: false,
        });
    }

    let rho = opts.rho;
    let thresh = 1.0 / rho;
    let mut beta = proj.min_norm_point();
    let mut z = beta.clone();
    let mut u = vec![0.0; p];
    let mut z_old = vec![0.0; p];
    let sqrt_p = (p as f64).sqrt();
    let mut iterations = 0;
    let mut converged = false;
    let mut gaps = (f64::INFINITY, f64::INFINITY);
    while iterations < opts.max_iter {
        iterations += 1;
        for j in 0..p {
            beta[j] = z[j] - u[j];
        }
        proj.project_in_place(&mut beta);
        z_old.copy_from_slice(&z);
        for j in 0..p {
            z[j] = soft_threshold(beta[j] + u[j], thresh);
        }
        let mut primal = 0.0;
        let mut dual = 0.0;
        for j in 0..p {
            let r = beta[j] - z[j];
            u[j] += r;
            primal += r * r;
            dual += (z[j] - z_old[j]).powi(2);
        }
        let primal = primal.sqrt();
        let dual = rho * dual.sqrt();
        let eps_pri = sqrt_p * opts.tol + opts.tol * norm2(&beta).max(norm2(&z));
        let eps_dual = sqrt_p * opts.tol + opts.tol * rho * norm2(&u);
        gaps = (primal, dual);
        if primal <= eps_pri && dual <= eps_dual {
            converged = true;
            break;
        }
        // Vertex solutions are usually identifiable long before the
        // residuals reach tolerance; stop as soon as one is certified.
        if opts.polish && iterations % CERTIFY_EVERY == 0 {
            if let Some(candidate) = certified_polish(x, f, &z, opts.feasibility_tol) {
                return Ok(BasisPursuitSolution {
                    feasibility_gap: feasibility(&candidate),
                    l1_norm: norm1(&candidate),
                    beta: candidate,
                    iterations,
                    polished: true,
                });
            }
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            solver: "basis pursuit ADMM",
            iterations,
            gap: gaps.0.max(gaps.1),
        });
    }

    let projected_l1 = norm1(&beta);
    if opts.polish {
        if let Some(candidate) = polish(x, f, &z) {
            let gap = feasibility(&candidate);
            let l1 = norm1(&candidate);
            if gap <= opts.feasibility_tol && l1 <= projected_l1 + 1e-9 * projected_l1.max(1.0) {
                return Ok(BasisPursuitSolution {
                    beta: candidate,
                    feasibility_gap: gap,
                    l1_norm: l1,
                    iterations,
                    polished: true,
                });
            }
        }
    }
    let gap = feasibility(&beta);
    if gap > opts.feasibility_tol {
        return Err(Error::NotConverged {
            solver: "basis pursuit ADMM",
            iterations,
            gap,
        });
    }
    Ok(BasisPursuitSolution {
        l1_norm: projected_l1,
        beta,
        feasibility_gap: gap,
        iterations,
        polished: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_by_two_picks_cheaper_vertex() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let sol = basis_pursuit(&x, &[2.0], &BasisPursuitOptions::default()).unwrap();
        assert!(sol.beta[0].abs() < 1e-9, "{:?}", sol.beta);
        assert!((sol.beta[1] - 1.0).abs() < 1e-9);
        assert!((sol.l1_norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn square_system_is_unique() {
        let x = Matrix::from_rows(&[vec![2., 1.], vec![1., 3.]]).unwrap();
        let sol = basis_pursuit(&x, &[3., 5.], &BasisPursuitOptions::default()).unwrap();
        // x⁻¹ f = (0.8, 1.4)
        assert!((sol.beta[0] - 0.8).abs() < 1e-9);
        assert!((sol.beta[1] - 1.4).abs() < 1e-9);
    }

    #[test]
    fn rejects_tall_and_singular() {
        let tall = Matrix::from_rows(&[vec![1.], vec![2.]]).unwrap();
        assert!(matches!(
            basis_pursuit(&tall, &[1., 2.], &BasisPursuitOptions::default()),
            Err(Error::RankDeficient(_))
        ));
        let dup = Matrix::from_rows(&[vec![1., 2., 3.], vec![2., 4., 6.]]).unwrap();
        assert!(matches!(
            basis_pursuit(&dup, &[1., 2.], &BasisPursuitOptions::default()),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn zero_target() {
        let x = Matrix::from_rows(&[vec![1., 2., 3.]]).unwrap();
        let sol = basis_pursuit(&x, &[0.0], &BasisPursuitOptions::default()).unwrap();
        assert_eq!(sol.beta, vec![0.0; 3]);
    }
}
