//! K-fold cross-validation over a log-spaced penalty grid.

use serde::{Deserialize, Serialize};

use super::lasso::{cd_kernel, lambda_max_on, LassoOptions};
use super::standardize::{center, Standardized};
use crate::error::{Error, Result};
use crate::numerics::{check_vector, dot, Matrix, RngState};
use crate::parallel::{self, Execution};

/// Smallest grid point as a fraction of `λ_max`.
pub const GRID_RATIO: f64 = 1e-3;
/// A fold's path stops once the training `R²` reaches this value...
pub const SATURATED_RSQ: f64 = 0.99;
/// ...or improves by less than this fraction between grid points.
pub const MIN_RSQ_GAIN: f64 = 1e-5;
/// ...or its held-out error exceeds this multiple of its running minimum.
pub const OVERFIT_FACTOR: f64 = 2.0;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_GRID_SIZE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    /// Strictly decreasing.
    pub grid: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
    pub selected: usize,
}

impl LambdaPath {
    pub fn lambda(&self) -> f64 {
        self.grid[self.selected]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub grid_size: usize,
    pub lasso: LassoOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: DEFAULT_FOLDS,
            grid_size: DEFAULT_GRID_SIZE,
            lasso: LassoOptions::default(),
        }
    }
}

pub fn log_grid(lambda_max: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![lambda_max];
    }
    let step = GRID_RATIO.ln() / (size - 1) as f64;
    (0..size).map(|i| lambda_max * (step * i as f64).exp()).collect()
}

/// Fold label per row: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, rng: RngState) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.generator().shuffle(&mut order);
    let mut label = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        label[row] = pos % folds;
    }
    label
}

fn fold_errors(
    x: &Matrix,
    y: &[f64],
    labels: &[usize],
    fold: usize,
    grid: &[f64],
    opts: &LassoOptions,
) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| labels[i] != fold).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| labels[i] == fold).collect();
    let xt = x.select_rows(&train);
    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let design = Standardized::new(&xt)?;
    let (yc, y_mean) = center(&yt);
    let cols: Vec<usize> = (0..x.cols()).collect();
    let tss = dot(&yc, &yc);
    let mut warm: Option<Vec<f64>> = None;
    let mut errs = Vec::with_capacity(grid.len());
    let mut prev_rsq = 0.0;
    let mut best = f64::INFINITY;
    for &lambda in grid {
        let fit = cd_kernel(&design, &cols, &yc, lambda, warm.as_deref(), opts, None)?;
        let rsq = if tss > 0.0 { 1.0 - dot(&fit.residual, &fit.residual) / tss } else { 1.0 };
        let saturated = rsq >= SATURATED_RSQ || (!errs.is_empty() && rsq - prev_rsq < MIN_RSQ_GAIN * rsq);
        prev_rsq = rsq;
        let mut sse = 0.0;
        for &i in &test {
            let mut pred = y_mean;
            for (j, &b) in fit.coef.iter().enumerate() {
                if b != 0.0 {
                    pred += b * (x[(i, j)] - design.means()[j]) / design.scales()[j];
                }
            }
            sse += (y[i] - pred).powi(2);
        }
        let err = sse / test.len() as f64;
        best = best.min(err);
        errs.push(err);
        if saturated || err > OVERFIT_FACTOR * best {
            // Further down the grid the fold only overfits; the tail inherits
            // the last error and so loses every tie.
            let last = errs[errs.len() - 1];
            errs.resize(grid.len(), last);
            break;
        }
        warm = Some(fit.coef);
    }
    Ok(errs)
}

/// Cross-validated Lasso penalty, "min" rule with ties going to the larger penalty.
pub fn cv_lambda(
    x: &Matrix,
    y: &[f64],
    rng: RngState,
    folds: usize,
    grid_size: usize,
) -> Result<LambdaPath> {
    cv_lambda_with(
        x,
        y,
        rng,
        &CvOptions {
            folds,
            grid_size,
            ..CvOptions::default()
        },
        Execution::Sequential,
    )
}

pub fn cv_lambda_with(
    x: &Matrix,
    y: &[f64],
    rng: RngState,
    opts: &CvOptions,
    exec: Execution,
) -> Result<LambdaPath> {
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Dimension(format!("{} responses for {n} rows", y.len())));
    }
    check_vector(y, "response")?;
    if opts.folds < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least 2 folds".into()));
    }
    if n < opts.folds {
        return Err(Error::InvalidArgument(format!(
            "{n} rows cannot be split into {} folds",
            opts.folds
        )));
    }
    if opts.grid_size == 0 {
        return Err(Error::InvalidArgument("grid must have at least one point".into()));
    }
    let design = Standardized::new(x)?;
    let (yc, _) = center(y);
    let cols: Vec<usize> = (0..x.cols()).collect();
    let lmax = lambda_max_on(&design, &cols, &yc);
    if !(lmax > 0.0) {
        return Err(Error::InvalidArgument("response is uncorrelated with every column".into()));
    }
    let grid = log_grid(lmax, opts.grid_size);
    let labels = fold_assignment(n, opts.folds, rng);
    let per_fold = parallel::try_map(exec, opts.folds, |k| {
        fold_errors(x, y, &labels, k, &grid, &opts.lasso)
    })?;
    let k = opts.folds as f64;
    let mut cv_mean = vec![0.0; grid.len()];
    let mut cv_se = vec![0.0; grid.len()];
    for g in 0..grid.len() {
        let m = per_fold.iter().map(|e| e[g]).sum::<f64>() / k;
        let var = per_fold.iter().map(|e| (e[g] - m).powi(2)).sum::<f64>() / (k - 1.0);
        cv_mean[g] = m;
        cv_se[g] = (var / k).sqrt();
    }
    let mut selected = 0;
    for g in 1..grid.len() {
        if cv_mean[g] < cv_mean[selected] {
            selected = g;
        }
    }
    Ok(LambdaPath {
        grid,
        cv_mean,
        cv_se,
        selected,
    })
}
