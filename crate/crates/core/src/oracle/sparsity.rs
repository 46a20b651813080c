//! `ℓ_r` sparsity of projected parameters and the bounds relating it to
//! the sparsity of `Σ⁻¹` and `Γ`.

use serde::{Deserialize, Serialize};

use super::population::population_beta_analytic;
use crate::error::{Error, Result};
use crate::numerics::{Cholesky, Matrix};

/// Entries at or below this magnitude count as zero.
pub const NONZERO_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityCurve {
    pub r_grid: Vec<f64>,
    /// `Σ|β_j|^r`, or the nonzero count at `r = 0`.
    pub norms: Vec<f64>,
}

pub fn count_nonzero(v: &[f64]) -> usize {
    v.iter().filter(|x| x.abs() > NONZERO_THRESHOLD).count()
}

/// `‖v‖_r^r`, the nonzero count at `r = 0`.
pub fn lr_power(v: &[f64], r: f64) -> f64 {
    if r == 0.0 {
        count_nonzero(v) as f64
    } else {
        v.iter().filter(|x| x.abs() > NONZERO_THRESHOLD).map(|x| x.abs().powf(r)).sum()
    }
}

pub fn sparsity_curve(beta: &[f64], r_grid: &[f64]) -> Result<SparsityCurve> {
    if let Some(r) = r_grid.iter().find(|r| !(**r >= 0.0 && **r <= 1.0)) {
        return Err(Error::InvalidArgument(format!("r must lie in [0, 1], got {r}")));
    }
    Ok(SparsityCurve {
        r_grid: r_grid.to_vec(),
        norms: r_grid.iter().map(|&r| lr_power(beta, r)).collect(),
    })
}

/// `n` equally spaced points on `[0, 1]`.
pub fn uniform_r_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        let holds = lhs <= rhs * (1.0 + 1e-12) + 1e-12;
        BoundCheck {
            name: name.into(),
            lhs,
            rhs,
            holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityBoundReport {
    pub r: f64,
    pub beta0: Vec<f64>,
    pub checks: Vec<BoundCheck>,
    /// Size of the largest block of `Σ` when it is block diagonal (after
    /// sorting variables into connected components).
    pub b_max: usize,
}

impl SparsityBoundReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

fn lr_norm(v: &[f64], r: f64) -> f64 {
    lr_power(v, r).powf(1.0 / r)
}

/// Connected components of the nonzero pattern of `Σ`.
fn blocks(sigma: &Matrix) -> Vec<Vec<usize>> {
    let p = sigma.rows();
    let mut seen = vec![false; p];
    let mut out = Vec::new();
    for s in 0..p {
        if seen[s] {
            continue;
        }
        let mut stack = vec![s];
        let mut comp = Vec::new();
        seen[s] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..p {
                if !seen[j] && sigma[(i, j)] != 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Evaluates both sides of the `ℓ_r` and `ℓ_0` bounds for `β⁰ = Σ⁻¹Γ`.
/// With `support` given, also the block-dependence bounds
/// `‖Γ‖₀ ≤ b_max |S|` and `‖β⁰‖₀ ≤ b_max² |S|`.
pub fn verify_sparsity_bounds(sigma: &Matrix, gamma: &[f64], r: f64, support: Option<&[usize]>) -> Result<SparsityBoundReport> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidArgument(format!("r must lie in (0, 1], got {r}")));
    }
    let p = sigma.rows();
    if p > 200 {
        return Err(Error::InvalidArgument(format!("explicit inverse limited to p <= 200, got {p}")));
    }
    let beta0 = population_beta_analytic(sigma, gamma)?;
    let theta = Cholesky::new(sigma)?.inverse();
    // s_ℓ: off-diagonal nonzeros of column ℓ of Σ⁻¹.
    let s: Vec<usize> = (0..p)
        .map(|l| (0..p).filter(|&k| k != l && theta[(k, l)].abs() > NONZERO_THRESHOLD).count())
        .collect();
    let s_max = s.iter().copied().max().unwrap_or(0);
    let theta_inf = theta.max_abs();
    let col_r = (0..p).map(|l| lr_norm(theta.col(l), r)).fold(0.0, f64::max);
    let beta_r = lr_norm(&beta0, r);
    let gamma_r = lr_norm(gamma, r);
    let beta_0 = count_nonzero(&beta0) as f64;
    let gamma_0 = count_nonzero(gamma) as f64;
    let s_gamma: f64 = (0..p)
        .filter(|&l| gamma[l].abs() > NONZERO_THRESHOLD)
        .map(|l| (s[l] + 1) as f64)
        .sum();

    let mut checks = vec![
        BoundCheck::new("l_r column bound", beta_r, col_r * gamma_r),
        BoundCheck::new(
            "l_r sup bound",
            beta_r,
            ((s_max + 1) as f64).powf(1.0 / r) * theta_inf * gamma_r,
        ),
        BoundCheck::new("l_0 support bound", beta_0, s_gamma),
        BoundCheck::new("l_0 count bound", beta_0, (s_max + 1) as f64 * gamma_0),
    ];
    let b_max = blocks(sigma).iter().map(Vec::len).max().unwrap_or(0);
    if let Some(support) = support {
        let sf = support.len() as f64;
        let b = b_max as f64;
        checks.push(BoundCheck::new("block gamma bound", gamma_0, b * sf));
        checks.push(BoundCheck::new("block beta bound", beta_0, b * b * sf));
    }
    Ok(SparsityBoundReport { r, beta0, checks, b_max })
}
