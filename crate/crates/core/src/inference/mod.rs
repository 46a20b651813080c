//! De-sparsified Lasso: bias-corrected coordinates, standard errors,
//! confidence intervals, p-values and assumption diagnostics.
//!
//! The pipeline works on the column-centered design and centered response,
//! so the instruments `Z_j` are orthogonal to the intercept.

pub mod nodewise;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_vector, dot, normal_quantile, two_sided_p_value, Matrix, RngState};
use crate::parallel::Execution;
use crate::solvers::cv::{cv_lambda_with, CvOptions, DEFAULT_FOLDS, DEFAULT_GRID_SIZE};
use crate::solvers::lasso::{lambda_max, lasso_cd, LassoOptions, LassoSolution};
use crate::solvers::Standardized;

pub use nodewise::{
    fit_all_nodewise, fit_all_nodewise_on, fit_nodewise, fit_nodewise_on, NodewiseFit, NodewiseMethod,
    NodewiseOptions, DEGENERATE_INSTRUMENT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMode {
    /// Heteroskedasticity/misspecification robust, for random design.
    #[default]
    Sandwich,
    /// `σ̂_ε ‖Z_j‖₂`, for fixed design.
    Classic,
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sandwich" => Ok(VarianceMode::Sandwich),
            "classic" => Ok(VarianceMode::Classic),
            other => Err(Error::InvalidArgument(format!("unknown variance mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub variance_mode: VarianceMode,
    pub alpha: f64,
    /// Penalty of the main Lasso; cross-validated when absent.
    pub lambda: Option<f64>,
    /// Shared nodewise penalty; see [`InferenceConfig::resolve_lambda_x`].
    pub lambda_x: Option<f64>,
    pub nodewise: NodewiseOptions,
    pub folds: usize,
    pub grid_size: usize,
    pub lasso: LassoOptions,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            variance_mode: VarianceMode::Sandwich,
            alpha: 0.05,
            lambda: None,
            lambda_x: None,
            nodewise: NodewiseOptions::default(),
            folds: DEFAULT_FOLDS,
            grid_size: DEFAULT_GRID_SIZE,
            lasso: LassoOptions::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

// Stream tags for the randomness used inside one pipeline run.
const TAG_CV_LAMBDA: u64 = 1;
const TAG_PICK_COLUMN: u64 = 2;
const TAG_CV_LAMBDA_X: u64 = 3;

impl InferenceConfig {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        for (name, v) in [("lambda", self.lambda), ("lambda_x", self.lambda_x)] {
            if let Some(v) = v {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {v}")));
                }
            }
        }
        Ok(())
    }

    fn cv_options(&self) -> CvOptions {
        CvOptions {
            folds: self.folds,
            grid_size: self.grid_size,
            lasso: self.lasso,
        }
    }

    fn rng(&self, tag: u64) -> RngState {
        RngState::new(self.seed, 0).derive(&[tag])
    }

    pub fn resolve_lambda(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(l),
            None => Ok(cv_lambda_with(x, y, self.rng(TAG_CV_LAMBDA), &self.cv_options(), self.execution)?.lambda()),
        }
    }

    /// Explicit value, else: Lasso nodewise — CV of one randomly picked column
    /// on the rest; square-root Lasso — the pivotal choice `√(2 log p / n)`.
    pub fn resolve_lambda_x(&self, x: &Matrix) -> Result<f64> {
        if let Some(l) = self.lambda_x {
            return Ok(l);
        }
        let (n, p) = (x.rows() as f64, x.cols());
        match self.nodewise.method {
            NodewiseMethod::SqrtLasso => Ok((2.0 * (p as f64).ln() / n).sqrt()),
            NodewiseMethod::Lasso => {
                let j = self.rng(TAG_PICK_COLUMN).generator().below(p);
                let rest: Vec<usize> = (0..p).filter(|&k| k != j).collect();
                let xr = x.select_columns(&rest);
                // A column orthogonal to all others needs no penalty at all.
                if !(lambda_max(&xr, x.col(j))? > 0.0) {
                    return Ok(0.0);
                }
                let path = cv_lambda_with(&xr, x.col(j), self.rng(TAG_CV_LAMBDA_X), &self.cv_options(), self.execution)?;
                Ok(path.lambda())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub d1_stat: f64,
    pub b1_min: f64,
    pub sigma_eps_hat: f64,
    pub lambda_used: f64,
    pub lambda_x_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub b_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub p_values: Vec<f64>,
    pub alpha: f64,
    pub variance_mode: VarianceMode,
    pub beta_lasso: LassoSolution,
    pub diagnostics: DiagnosticsRecord,
}

impl InferenceReport {
    /// Number of coordinates rejected at level `alpha`.
    pub fn significant(&self) -> usize {
        self.p_values.iter().filter(|&&p| p < self.alpha).count()
    }
}

/// `b̂_j = Z_jᵀY/Z_jᵀX_j − Σ_{k≠j} (Z_jᵀX_k/Z_jᵀX_j) β̂_k`, evaluated term by term.
pub fn desparsify(x: &Matrix, y: &[f64], beta: &[f64], nodewise: &[NodewiseFit]) -> Result<Vec<f64>> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n || beta.len() != p || nodewise.len() != p {
        return Err(Error::Dimension(format!(
            "desparsify: {n}x{p} design, {} responses, {} coefficients, {} nodewise fits",
            y.len(),
            beta.len(),
            nodewise.len()
        )));
    }
    let mut b_hat = Vec::with_capacity(p);
    for (j, fit) in nodewise.iter().enumerate() {
        if fit.j != j || fit.z.len() != n {
            return Err(Error::Dimension(format!("nodewise fit {j} does not match the design")));
        }
        let zx = fit.zx_inner;
        if !(zx.abs() >= DEGENERATE_INSTRUMENT * dot(x.col(j), x.col(j))) {
            return Err(Error::DegenerateInstrument { column: j, inner: zx });
        }
        let mut correction = 0.0;
        for k in 0..p {
            if k != j && beta[k] != 0.0 {
                correction += dot(&fit.z, x.col(k)) / zx * beta[k];
            }
        }
        b_hat.push(dot(&fit.z, y) / zx - correction);
    }
    Ok(b_hat)
}

fn check_pair(residuals: &[f64], z: Option<&[f64]>) -> Result<()> {
    if residuals.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "variance estimate needs n >= 2, got {}",
            residuals.len()
        )));
    }
    if let Some(z) = z {
        if z.len() != residuals.len() {
            return Err(Error::Dimension(format!("{} residuals but instrument of length {}", residuals.len(), z.len())));
        }
    }
    Ok(())
}

/// Empirical variance (1/n) of the products `ε̂_i Z_i`.
pub fn sandwich_variance(residuals: &[f64], z: &[f64]) -> Result<f64> {
    check_pair(residuals, Some(z))?;
    let n = residuals.len() as f64;
    let prod: Vec<f64> = residuals.iter().zip(z).map(|(e, z)| e * z).collect();
    let m = prod.iter().sum::<f64>() / n;
    Ok(prod.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

/// Empirical variance (1/n) of the residuals.
pub fn classic_variance(residuals: &[f64]) -> Result<f64> {
    check_pair(residuals, None)?;
    let n = residuals.len() as f64;
    let m = residuals.iter().sum::<f64>() / n;
    Ok(residuals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

pub fn compute_diagnostics(
    x: &Matrix,
    residuals: &[f64],
    nodewise: &[NodewiseFit],
    lambda: f64,
    lambda_x: f64,
) -> Result<DiagnosticsRecord> {
    if residuals.len() != x.rows() {
        return Err(Error::Dimension(format!("{} residuals for {} rows", residuals.len(), x.rows())));
    }
    let n = x.rows() as f64;
    let d1_stat = (0..x.cols())
        .map(|k| (dot(residuals, x.col(k)) / n).abs())
        .fold(0.0, f64::max);
    let b1_min = nodewise
        .iter()
        .map(|f| f.z_norm_sq_over_n)
        .fold(f64::INFINITY, f64::min);
    let sigma_eps_hat = classic_variance(residuals)?.sqrt();
    Ok(DiagnosticsRecord {
        d1_stat,
        b1_min: if nodewise.is_empty() { 0.0 } else { b1_min },
        sigma_eps_hat,
        lambda_used: lambda,
        lambda_x_used: lambda_x,
    })
}

/// Everything up to the variance step; one fit serves both variance modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DesparsifiedFit {
    pub b_hat: Vec<f64>,
    pub beta_lasso: LassoSolution,
    pub nodewise: Vec<NodewiseFit>,
    pub diagnostics: DiagnosticsRecord,
}

impl DesparsifiedFit {
    pub fn residuals(&self) -> &[f64] {
        &self.beta_lasso.residuals
    }

    pub fn standard_errors(&self, mode: VarianceMode) -> Result<Vec<f64>> {
        let e = self.residuals();
        let n = e.len() as f64;
        match mode {
            VarianceMode::Sandwich => self
                .nodewise
                .iter()
                .map(|f| Ok(n.sqrt() * sandwich_variance(e, &f.z)?.sqrt() / f.zx_inner.abs()))
                .collect(),
            VarianceMode::Classic => {
                let sigma = self.diagnostics.sigma_eps_hat;
                Ok(self
                    .nodewise
                    .iter()
                    .map(|f| sigma * (f.z_norm_sq_over_n * n).sqrt() / f.zx_inner.abs())
                    .collect())
            }
        }
    }

    pub fn report(&self, mode: VarianceMode, alpha: f64) -> Result<InferenceReport> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let se = self.standard_errors(mode)?;
        assemble(self.b_hat.clone(), se, alpha, mode, self.beta_lasso.clone(), self.diagnostics.clone())
    }
}

fn assemble(
    b_hat: Vec<f64>,
    se: Vec<f64>,
    alpha: f64,
    variance_mode: VarianceMode,
    beta_lasso: LassoSolution,
    diagnostics: DiagnosticsRecord,
) -> Result<InferenceReport> {
    let q = normal_quantile(1.0 - alpha / 2.0)?;
    let ci_lower = b_hat.iter().zip(&se).map(|(b, s)| b - q * s).collect();
    let ci_upper = b_hat.iter().zip(&se).map(|(b, s)| b + q * s).collect();
    let p_values = b_hat
        .iter()
        .zip(&se)
        .map(|(&b, &s)| if s > 0.0 { two_sided_p_value(b / s) } else if b == 0.0 { 1.0 } else { 0.0 })
        .collect();
    Ok(InferenceReport {
        b_hat,
        se,
        ci_lower,
        ci_upper,
        p_values,
        alpha,
        variance_mode,
        beta_lasso,
        diagnostics,
    })
}

fn centered_columns(x: &Matrix) -> Matrix {
    let mut xc = x.clone();
    for j in 0..xc.cols() {
        let col = xc.col_mut(j);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        col.iter_mut().for_each(|v| *v -= m);
    }
    xc
}

/// Nodewise fits of a design, reusable for every response observed on it.
#[derive(Debug, Clone, PartialEq)]
pub struct NodewiseCache {
    pub lambda_x: f64,
    pub fits: Vec<NodewiseFit>,
}

fn check_design(x: &Matrix) -> Result<()> {
    if x.cols() < 2 {
        return Err(Error::InvalidArgument("de-sparsified Lasso needs at least two columns".into()));
    }
    if x.rows() < 2 {
        return Err(Error::InvalidArgument("de-sparsified Lasso needs at least two rows".into()));
    }
    Ok(())
}

/// Resolves `λ_X` and runs all nodewise regressions on the centered design.
pub fn nodewise_cache(x: &Matrix, config: &InferenceConfig) -> Result<NodewiseCache> {
    config.validate()?;
    check_design(x)?;
    let xc = centered_columns(x);
    let design = Standardized::new(&xc)?;
    let lambda_x = config.resolve_lambda_x(&xc)?;
    let fits = fit_all_nodewise_on(&xc, &design, lambda_x, &config.nodewise, config.execution)?;
    Ok(NodewiseCache { lambda_x, fits })
}

/// Lasso, nodewise fits and the bias correction for `(x, y)`.
pub fn fit_desparsified(x: &Matrix, y: &[f64], config: &InferenceConfig) -> Result<DesparsifiedFit> {
    check_response(x, y)?;
    let cache = nodewise_cache(x, config)?;
    fit_desparsified_with(x, y, config, &cache)
}

fn check_response(x: &Matrix, y: &[f64]) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!("{} responses for {} rows", y.len(), x.rows())));
    }
    check_vector(y, "response")
}

/// As [`fit_desparsified`] with nodewise fits computed earlier on the same `x`.
pub fn fit_desparsified_with(x: &Matrix, y: &[f64], config: &InferenceConfig, cache: &NodewiseCache) -> Result<DesparsifiedFit> {
    config.validate()?;
    check_design(x)?;
    check_response(x, y)?;
    let (n, p) = (x.rows(), x.cols());
    if cache.fits.len() != p || cache.fits.iter().any(|f| f.z.len() != n) {
        return Err(Error::Dimension(format!(
            "{} cached nodewise fits for a {n}x{p} design",
            cache.fits.len()
        )));
    }
    let xc = centered_columns(x);
    let ym = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();

    let lambda = config.resolve_lambda(&xc, &yc)?;
    let mut beta_lasso = lasso_cd(&xc, &yc, lambda, &config.lasso)?;
    // Re-express the intercept for the caller's uncentered data.
    let means = x.tr_mul_vec(&vec![1.0 / n as f64; n])?;
    beta_lasso.intercept = ym - means.iter().zip(&beta_lasso.beta).map(|(m, b)| m * b).sum::<f64>();

    let nodewise = cache.fits.clone();
    let b_hat = desparsify(&xc, &yc, &beta_lasso.beta, &nodewise)?;
    let diagnostics = compute_diagnostics(&xc, &beta_lasso.residuals, &nodewise, lambda, cache.lambda_x)?;
    Ok(DesparsifiedFit {
        b_hat,
        beta_lasso,
        nodewise,
        diagnostics,
    })
}

pub fn build_report(x: &Matrix, y: &[f64], config: &InferenceConfig) -> Result<InferenceReport> {
    fit_desparsified(x, y, config)?.report(config.variance_mode, config.alpha)
}
