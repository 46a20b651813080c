//! Nodewise regressions: column `j` on all other columns, keeping the
//! residual `Z_j = X_j − X_{−j} γ̂_j` as the instrument for coordinate `j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, Matrix};
use crate::parallel::{self, Execution};
use crate::solvers::lasso::{cd_kernel, LassoOptions};
use crate::solvers::sqrt_lasso::{sqrt_kernel, SqrtLassoOptions};
use crate::solvers::standardize::{center, Standardized};

/// Instruments with `|Z_jᵀX_j|` below this fraction of `‖X_j‖²` are unusable.
pub const DEGENERATE_INSTRUMENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodewiseMethod {
    #[default]
    Lasso,
    SqrtLasso,
}

impl std::str::FromStr for NodewiseMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(NodewiseMethod::Lasso),
            "sqrt-lasso" => Ok(NodewiseMethod::SqrtLasso),
            other => Err(Error::InvalidArgument(format!("unknown nodewise method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodewiseOptions {
    pub method: NodewiseMethod,
    pub lasso: LassoOptions,
    pub sqrt: SqrtLassoOptions,
}

impl NodewiseOptions {
    pub fn with_method(method: NodewiseMethod) -> Self {
        NodewiseOptions {
            method,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodewiseFit {
    pub j: usize,
    /// Coefficients on the other columns in their original order (`p − 1` entries).
    pub gamma_hat: Vec<f64>,
    pub z: Vec<f64>,
    pub zx_inner: f64,
    pub z_norm_sq_over_n: f64,
    pub method: NodewiseMethod,
    pub lambda_x: f64,
}

impl NodewiseFit {
    /// Column index in the full design of `gamma_hat[k]`.
    pub fn other_column(&self, k: usize) -> usize {
        if k < self.j {
            k
        } else {
            k + 1
        }
    }
}

pub(crate) fn others(p: usize, j: usize) -> Vec<usize> {
    (0..p).filter(|&k| k != j).collect()
}

/// Nodewise fit reusing a standardized copy of `x`.
pub fn fit_nodewise_on(
    x: &Matrix,
    design: &Standardized,
    j: usize,
    lambda_x: f64,
    opts: &NodewiseOptions,
) -> Result<NodewiseFit> {
    let (n, p) = (x.rows(), x.cols());
    if p < 2 {
        return Err(Error::InvalidArgument(
            "nodewise regression needs at least two columns".into(),
        ));
    }
    if j >= p {
        return Err(Error::InvalidArgument(format!("column {j} out of range for p = {p}")));
    }
    if !(lambda_x >= 0.0) || !lambda_x.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda_x must be finite and >= 0, got {lambda_x}")));
    }
    let cols = others(p, j);
    let xj = x.col(j);
    let (target, _) = center(xj);
    let coef = match opts.method {
        NodewiseMethod::Lasso => cd_kernel(design, &cols, &target, lambda_x, None, &opts.lasso, None)?.coef,
        NodewiseMethod::SqrtLasso => sqrt_kernel(design, &cols, &target, lambda_x, &opts.sqrt)?.fit.coef,
    };
    let gamma_hat: Vec<f64> = cols
        .iter()
        .zip(&coef)
        .map(|(&c, &b)| b / design.scales()[c])
        .collect();
    let mut z = xj.to_vec();
    for (&c, &g) in cols.iter().zip(&gamma_hat) {
        if g != 0.0 {
            axpy(-g, x.col(c), &mut z);
        }
    }
    let zx_inner = dot(&z, xj);
    let xj_sq = dot(xj, xj);
    if !(zx_inner.abs() >= DEGENERATE_INSTRUMENT * xj_sq) {
        return Err(Error::DegenerateInstrument {
            column: j,
            inner: zx_inner,
        });
    }
    let z_norm_sq_over_n = dot(&z, &z) / n as f64;
    Ok(NodewiseFit {
        j,
        gamma_hat,
        z,
        zx_inner,
        z_norm_sq_over_n,
        method: opts.method,
        lambda_x,
    })
}

pub fn fit_nodewise(x: &Matrix, j: usize, lambda_x: f64, opts: &NodewiseOptions) -> Result<NodewiseFit> {
    if x.cols() < 2 {
        return Err(Error::InvalidArgument(
            "nodewise regression needs at least two columns".into(),
        ));
    }
    let design = Standardized::new(x)?;
    fit_nodewise_on(x, &design, j, lambda_x, opts)
}

/// One fit per column, in column order. Errors carry the failing column.
pub fn fit_all_nodewise(
    x: &Matrix,
    lambda_x: f64,
    opts: &NodewiseOptions,
    exec: Execution,
) -> Result<Vec<NodewiseFit>> {
    if x.cols() < 2 {
        return Err(Error::InvalidArgument(
            "nodewise regression needs at least two columns".into(),
        ));
    }
    let design = Standardized::new(x)?;
    fit_all_nodewise_on(x, &design, lambda_x, opts, exec)
}

pub fn fit_all_nodewise_on(
    x: &Matrix,
    design: &Standardized,
    lambda_x: f64,
    opts: &NodewiseOptions,
    exec: Execution,
) -> Result<Vec<NodewiseFit>> {
    parallel::try_map(exec, x.cols(), |j| {
        fit_nodewise_on(x, design, j, lambda_x, opts).map_err(|e| match e {
            e @ Error::DegenerateInstrument { .. } => e,
            e => Error::at_column(j, e),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_mvn, RngState};
    use crate::solvers::lasso::lambda_max;

    #[test]
    fn orthogonal_columns_give_zero_gamma() {
        // Centered, exactly orthogonal columns.
        let x = Matrix::from_rows(&[
            vec![1., 1.],
            vec![1., -1.],
            vec![-1., 1.],
            vec![-1., -1.],
        ])
        .unwrap();
        for j in 0..2 {
            let fit = fit_nodewise(&x, j, 0.1, &NodewiseOptions::default()).unwrap();
            assert_eq!(fit.gamma_hat, vec![0.0]);
            assert_eq!(fit.z, x.col(j).to_vec());
            assert_eq!(fit.zx_inner, 4.0);
        }
    }

    #[test]
    fn above_lambda_max_keeps_column() {
        let x = sample_mvn(RngState::new(21, 0), 40, &Matrix::identity(4)).unwrap();
        let rest = x.select_columns(&[1, 2, 3]);
        let lmax = lambda_max(&rest, x.col(0)).unwrap();
        let fit = fit_nodewise(&x, 0, lmax, &NodewiseOptions::default()).unwrap();
        assert!(fit.gamma_hat.iter().all(|g| *g == 0.0));
        assert_eq!(fit.z, x.col(0).to_vec());
    }

    #[test]
    fn residual_matches_gamma() {
        let x = sample_mvn(RngState::new(22, 0), 50, &Matrix::identity(6)).unwrap();
        let fit = fit_nodewise(&x, 3, 0.05, &NodewiseOptions::default()).unwrap();
        let mut z = x.col(3).to_vec();
        for k in 0..5 {
            axpy(-fit.gamma_hat[k], x.col(fit.other_column(k)), &mut z);
        }
        for (a, b) in z.iter().zip(&fit.z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_column_rejected() {
        let x = Matrix::from_rows(&[vec![1.], vec![2.]]).unwrap();
        assert!(fit_nodewise(&x, 0, 0.1, &NodewiseOptions::default()).is_err());
    }

    #[test]
    fn collinear_column_is_degenerate() {
        let mut x = sample_mvn(RngState::new(23, 0), 30, &Matrix::identity(3)).unwrap();
        let c0 = x.col(0).to_vec();
        x.col_mut(2).iter_mut().zip(&c0).for_each(|(a, b)| *a = 2.0 * b);
        let opts = NodewiseOptions {
            lasso: LassoOptions::tight(),
            ..Default::default()
        };
        match fit_nodewise(&x, 2, 0.0, &opts) {
            Err(Error::DegenerateInstrument { column: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
