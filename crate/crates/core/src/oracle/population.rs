//! Population projections `β⁰ = argmin_β E|f⁰(X) − Xᵀβ|² = Σ⁻¹Γ`.
//!
//! The Monte-Carlo estimator works in whitened coordinates. For a leading
//! block `V` of variables containing the support of `f⁰`, write
//! `X_V = L g` with `L = chol(Σ_V)`. Then `β⁰_V = L⁻ᵀ Cov(f⁰, g)` and every
//! coordinate outside `V` is zero, because the whitened variates beyond `V`
//! are independent of `f⁰`. `V` extends a few coordinates past the support
//! so that the containment check sees estimated rather than structural
//! zeros next to the active variables.

use serde::{Deserialize, Serialize};

use super::model::{NonlinearModel, Term};
use crate::error::{Error, Result};
use crate::numerics::{dot, Cholesky, Matrix, MvnSampler, RngState};
use crate::parallel::{self, Execution};
use crate::solvers::{basis_pursuit, BasisPursuitOptions};

/// Minimum number of Monte-Carlo draws accepted.
pub const MIN_DRAWS: usize = 10_000;
/// Coordinates beyond the last active variable that are estimated explicitly.
pub const MC_MARGIN: usize = 4;
const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationProjection {
    pub beta0: Vec<f64>,
    pub gamma_cov: Vec<f64>,
    pub method: ProjectionMethod,
    pub mc_draws: usize,
    /// Per-coordinate standard errors (empty for the analytic method).
    pub mc_se: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Pairs `(g, −g)`, so the even part of `f⁰` drops out exactly, plus the
    /// known second moments of `g` as control variates for the odd part.
    #[default]
    Antithetic,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub draws: usize,
    pub sampling: Sampling,
    pub execution: Execution,
}

impl McOptions {
    pub fn new(draws: usize) -> Self {
        McOptions {
            draws,
            sampling: Sampling::Antithetic,
            execution: Execution::default(),
        }
    }
}

/// Principal submatrix on `idx`.
pub(crate) fn restrict(sigma: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), idx.len());
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out[(a, b)] = sigma[(i, j)];
        }
    }
    out
}

/// Solves `Σβ = Γ` by Cholesky.
pub fn population_beta_analytic(sigma: &Matrix, gamma: &[f64]) -> Result<Vec<f64>> {
    if !sigma.is_square() || sigma.rows() != gamma.len() {
        return Err(Error::Dimension(format!(
            "{}x{} covariance with Γ of length {}",
            sigma.rows(),
            sigma.cols(),
            gamma.len()
        )));
    }
    Cholesky::new(sigma)?.solve(gamma)
}

pub fn analytic_projection(model: &NonlinearModel) -> Result<PopulationProjection> {
    let sigma = model.sigma()?;
    let gamma = model.analytic_gamma(&sigma)?;
    let beta0 = population_beta_analytic(&sigma, &gamma)?;
    Ok(PopulationProjection {
        beta0,
        gamma_cov: gamma,
        method: ProjectionMethod::Analytic,
        mc_draws: 0,
        mc_se: Vec::new(),
    })
}

/// Whitened covariance estimate `Cov(f, g)` with per-coordinate variances.
struct WhitenedMoments {
    cov: Vec<f64>,
    var: Vec<f64>,
}

#[derive(Clone)]
struct Sums {
    count: f64,
    f: f64,
    g: Vec<f64>,
    q: Vec<f64>,
    q2: Vec<f64>,
}

impl Sums {
    fn new(m: usize) -> Self {
        Sums {
            count: 0.0,
            f: 0.0,
            g: vec![0.0; m],
            q: vec![0.0; m],
            q2: vec![0.0; m],
        }
    }

    fn merge(&mut self, o: &Sums) {
        self.count += o.count;
        self.f += o.f;
        for l in 0..self.g.len() {
            self.g[l] += o.g[l];
            self.q[l] += o.q[l];
            self.q2[l] += o.q2[l];
        }
    }
}

/// Monte-Carlo `Cov(f(L g), g)` over `draws` variates of dimension `L.rows()`.
/// `f` receives the correlated vector `L g`.
fn whitened_moments<F>(sampler: &MvnSampler, f: F, rng: RngState, opts: &McOptions) -> Result<WhitenedMoments>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if opts.draws < MIN_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "Monte-Carlo projection needs at least {MIN_DRAWS} draws, got {}",
            opts.draws
        )));
    }
    let m = sampler.dim();
    let chunks = opts.draws.div_ceil(CHUNK);
    let chunk_len = |c: usize| (opts.draws - c * CHUNK).min(CHUNK);
    match opts.sampling {
        Sampling::Antithetic => {
            // Odd part d = (f(Lg) − f(−Lg))/2 of each antithetic pair; the
            // covariance is estimated with the known E[ggᵀ] = I as control
            // variate, i.e. by the least-squares coefficient of d on g.
            let pair = |gen: &mut crate::numerics::Generator, g: &mut [f64], x: &mut [f64], xn: &mut [f64]| {
                gen.fill_normal(g);
                sampler.transform(g, x);
                xn.iter_mut().zip(x.iter()).for_each(|(a, b)| *a = -b);
                0.5 * (f(x) - f(xn))
            };
            let pairs = |c: usize| chunk_len(c).div_ceil(2);
            let firsts = parallel::map(opts.execution, chunks, |c| {
                let mut gen = rng.derive(&[c as u64]).generator();
                let (mut g, mut x, mut xn) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
                let mut gram = vec![0.0; m * m];
                let mut s = Sums::new(m);
                for _ in 0..pairs(c) {
                    let d = pair(&mut gen, &mut g, &mut x, &mut xn);
                    s.count += 1.0;
                    for k in 0..m {
                        s.q[k] += d * g[k];
                        for l in 0..=k {
                            gram[k * m + l] += g[k] * g[l];
                        }
                    }
                }
                (s, gram)
            });
            let mut tot = Sums::new(m);
            let mut gram = Matrix::zeros(m, m);
            for (s, gr) in &firsts {
                tot.merge(s);
                for k in 0..m {
                    for l in 0..=k {
                        gram[(k, l)] += gr[k * m + l];
                    }
                }
            }
            for k in 0..m {
                for l in 0..k {
                    gram[(l, k)] = gram[(k, l)];
                }
            }
            let n = tot.count;
            let coef = Cholesky::new(&gram)?.solve(&tot.q)?;
            let seconds = parallel::map(opts.execution, chunks, |c| {
                let mut gen = rng.derive(&[c as u64]).generator();
                let (mut g, mut x, mut xn) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
                let mut s = Sums::new(m);
                for _ in 0..pairs(c) {
                    let d = pair(&mut gen, &mut g, &mut x, &mut xn);
                    let r = d - dot(&coef, &g);
                    for l in 0..m {
                        s.q2[l] += (r * g[l]).powi(2);
                    }
                }
                s
            });
            let mut tot2 = Sums::new(m);
            seconds.iter().for_each(|p| tot2.merge(p));
            let var = tot2.q2.iter().map(|v| v / (n * n)).collect();
            Ok(WhitenedMoments { cov: coef, var })
        }
        Sampling::Plain => {
            let draw = |c: usize, visit: &mut dyn FnMut(f64, &[f64])| {
                let mut gen = rng.derive(&[c as u64]).generator();
                let (mut g, mut x) = (vec![0.0; m], vec![0.0; m]);
                for _ in 0..chunk_len(c) {
                    gen.fill_normal(&mut g);
                    sampler.transform(&g, &mut x);
                    visit(f(&x), &g);
                }
            };
            // First pass: means. Second pass regenerates the same variates.
            let firsts = parallel::map(opts.execution, chunks, |c| {
                let mut s = Sums::new(m);
                draw(c, &mut |fv, g| {
                    s.count += 1.0;
                    s.f += fv;
                    s.g.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                });
                s
            });
            let mut tot = Sums::new(m);
            firsts.iter().for_each(|p| tot.merge(p));
            let n = tot.count;
            let fbar = tot.f / n;
            let gbar: Vec<f64> = tot.g.iter().map(|v| v / n).collect();
            let seconds = parallel::map(opts.execution, chunks, |c| {
                let mut s = Sums::new(m);
                draw(c, &mut |fv, g| {
                    for l in 0..m {
                        let q = (fv - fbar) * (g[l] - gbar[l]);
                        s.q[l] += q;
                        s.q2[l] += q * q;
                    }
                });
                s
            });
            let mut tot = Sums::new(m);
            seconds.iter().for_each(|p| tot.merge(p));
            let cov: Vec<f64> = tot.q.iter().map(|q| q / (n - 1.0)).collect();
            let var = (0..m)
                .map(|l| ((tot.q2[l] / n - (tot.q[l] / n).powi(2)) / n).max(0.0))
                .collect();
            Ok(WhitenedMoments { cov, var })
        }
    }
}

/// `β_V = L⁻ᵀ c` and the diagonal delta-method standard errors.
fn unwhiten(chol: &Cholesky, moments: &WhitenedMoments) -> (Vec<f64>, Vec<f64>) {
    let m = chol.dim();
    let beta = chol.solve_upper(&moments.cov);
    // Rows of L⁻ᵀ are columns of L⁻¹.
    let mut se2 = vec![0.0; m];
    let mut e = vec![0.0; m];
    for l in 0..m {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[l] = 1.0;
        let col = chol.solve_upper(&e); // column l of L⁻ᵀ
        for j in 0..m {
            se2[j] += col[j] * col[j] * moments.var[l];
        }
    }
    (beta, se2.into_iter().map(f64::sqrt).collect())
}

fn empty_support(model: &NonlinearModel, draws: usize) -> PopulationProjection {
    PopulationProjection {
        beta0: vec![0.0; model.p],
        gamma_cov: vec![0.0; model.p],
        method: ProjectionMethod::MonteCarlo,
        mc_draws: draws,
        mc_se: vec![0.0; model.p],
    }
}

pub fn population_beta_mc(model: &NonlinearModel, rng: RngState, draws: usize) -> Result<PopulationProjection> {
    population_beta_mc_with(model, rng, &McOptions::new(draws))
}

pub fn population_beta_mc_with(model: &NonlinearModel, rng: RngState, opts: &McOptions) -> Result<PopulationProjection> {
    let sigma = model.sigma()?;
    let p = model.p;
    let support = model.support();
    let Some(&last) = support.last() else {
        if opts.draws < MIN_DRAWS {
            return Err(Error::InvalidArgument(format!("Monte-Carlo projection needs at least {MIN_DRAWS} draws")));
        }
        return Ok(empty_support(model, opts.draws));
    };
    let m = (last + 1 + MC_MARGIN).min(p);
    let lead: Vec<usize> = (0..m).collect();
    let sigma_v = restrict(&sigma, &lead);
    let sampler = MvnSampler::new(&sigma_v)?;
    let chol = Cholesky::new(&sigma_v)?;
    let moments = whitened_moments(&sampler, |x| model.eval_with(|k| x[k]), rng, opts)?;
    let (beta_v, se_v) = unwhiten(&chol, &moments);

    let mut beta0 = vec![0.0; p];
    let mut mc_se = vec![0.0; p];
    beta0[..m].copy_from_slice(&beta_v);
    mc_se[..m].copy_from_slice(&se_v);
    // Γ = Σ β⁰, exact given the estimated β_V.
    let gamma_cov = (0..p)
        .map(|l| (0..m).map(|k| sigma[(l, k)] * beta_v[k]).sum())
        .collect();
    Ok(PopulationProjection {
        beta0,
        gamma_cov,
        method: ProjectionMethod::MonteCarlo,
        mc_draws: opts.draws,
        mc_se,
    })
}

/// Projection of partition component `k` onto its own variables only,
/// placed back at the global indices (zero elsewhere).
pub fn submodel_projection(model: &NonlinearModel, k: usize, rng: RngState, opts: &McOptions) -> Result<PopulationProjection> {
    let terms: Vec<Term> = model.component(k)?;
    let block = model.partition()[k].clone();
    submodel_projection_of(model, &terms, &block, rng, opts)
}

/// As [`submodel_projection`] for an explicit list of terms on `block`.
pub fn submodel_projection_of(
    model: &NonlinearModel,
    terms: &[Term],
    block: &[usize],
    rng: RngState,
    opts: &McOptions,
) -> Result<PopulationProjection> {
    let sigma = model.sigma()?;
    if block.is_empty() || block.iter().any(|&v| v >= model.p) {
        return Err(Error::InvalidArgument(format!("invalid variable block {block:?}")));
    }
    if let Some(t) = terms.iter().find(|t| t.vars().iter().any(|v| !block.contains(v))) {
        return Err(Error::InvalidArgument(format!("term {t:?} uses variables outside {block:?}")));
    }
    // Position of each global index inside the block.
    let mut pos = vec![usize::MAX; model.p];
    for (a, &v) in block.iter().enumerate() {
        pos[v] = a;
    }
    let sub = restrict(&sigma, block);
    let sampler = MvnSampler::new(&sub)?;
    let chol = Cholesky::new(&sub)?;
    let f = |x: &[f64]| terms.iter().map(|t| t.eval(|v| x[pos[v]])).sum::<f64>();
    let moments = whitened_moments(&sampler, f, rng, opts)?;
    let (beta_b, se_b) = unwhiten(&chol, &moments);
    let mut beta0 = vec![0.0; model.p];
    let mut mc_se = vec![0.0; model.p];
    let mut gamma_cov = vec![0.0; model.p];
    let gamma_b = {
        // Cov(f_k, X_block) = L c
        let l = chol.factor();
        (0..block.len())
            .map(|i| (0..=i).map(|j| l[(i, j)] * moments.cov[j]).sum::<f64>())
            .collect::<Vec<_>>()
    };
    for (a, &v) in block.iter().enumerate() {
        beta0[v] = beta_b[a];
        mc_se[v] = se_b[a];
        gamma_cov[v] = gamma_b[a];
    }
    Ok(PopulationProjection {
        beta0,
        gamma_cov,
        method: ProjectionMethod::MonteCarlo,
        mc_draws: opts.draws,
        mc_se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    /// Coordinates with `|β⁰_j| > tol` outside the support of `f⁰`.
    pub violations: Vec<usize>,
    pub tol: f64,
}

impl ContainmentReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn check_support_containment(model: &NonlinearModel, beta0: &[f64], tol: &[f64]) -> ContainmentReport {
    let support = model.support();
    let violations = beta0
        .iter()
        .enumerate()
        .filter(|&(j, b)| !support.contains(&j) && b.abs() > tol.get(j).copied().unwrap_or(tol[0]))
        .map(|(j, _)| j)
        .collect();
    ContainmentReport {
        violations,
        tol: tol.iter().copied().fold(0.0, f64::max),
    }
}

/// Brute-force `E[(ε⁰ Z⁰_j)²]` with `ε⁰ = f⁰(X) − E f⁰ − Xᵀβ⁰ + ξ` and
/// `Z⁰_j = X_j − E[X_j | X_{−j}]`. Returns the estimate and its standard error.
pub fn population_omega_sq_mc(
    model: &NonlinearModel,
    beta0: &[f64],
    mean_f0: f64,
    j: usize,
    rng: RngState,
    opts: &McOptions,
) -> Result<(f64, f64)> {
    let p = model.p;
    if beta0.len() != p || j >= p {
        return Err(Error::Dimension(format!("β⁰ of length {} / column {j} for p = {p}", beta0.len())));
    }
    if opts.draws < MIN_DRAWS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_DRAWS} draws")));
    }
    let sigma = model.sigma()?;
    let sampler = MvnSampler::new(&sigma)?;
    // Z⁰_j = θᵀX/θ_j with θ = Σ⁻¹e_j, i.e. (Lᵀθ/θ_j)ᵀ g = (L⁻¹e_j)ᵀ g / θ_j.
    let chol = Cholesky::new(&sigma)?;
    let mut e = vec![0.0; p];
    e[j] = 1.0;
    let w = chol.solve_lower(&e);
    let theta_jj = dot(&w, &w);
    let w: Vec<(usize, f64)> = w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, v / theta_jj)).collect();
    let mut needed: Vec<usize> = model.support();
    needed.extend((0..p).filter(|&k| beta0[k] != 0.0));
    needed.sort_unstable();
    needed.dedup();
    let mut pos = vec![usize::MAX; p];
    for (a, &v) in needed.iter().enumerate() {
        pos[v] = a;
    }
    let lin: Vec<(usize, f64)> = (0..p).filter(|&k| beta0[k] != 0.0).map(|k| (pos[k], beta0[k])).collect();
    let chunks = opts.draws.div_ceil(CHUNK);
    let parts = parallel::map(opts.execution, chunks, |c| {
        let mut gen = rng.derive(&[c as u64]).generator();
        let mut g = vec![0.0; p];
        let mut x = vec![0.0; needed.len()];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..(opts.draws - c * CHUNK).min(CHUNK) {
            gen.fill_normal(&mut g);
            let xi = model.noise_sd * gen.standard_normal();
            sampler.transform_at(&g, &needed, &mut x);
            let fx = model.eval_with(|k| x[pos[k]]);
            let eps = fx - mean_f0 - lin.iter().map(|&(a, b)| x[a] * b).sum::<f64>() + xi;
            let z: f64 = w.iter().map(|&(i, v)| v * g[i]).sum();
            let v = (eps * z).powi(2);
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let n = opts.draws as f64;
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let m = s / n;
    Ok((m, ((s2 / n - m * m).max(0.0) / n).sqrt()))
}

/// Basis-pursuit representation of `f⁰` evaluated at the rows of `x`.
pub fn fixed_design_target(x: &Matrix, model: &NonlinearModel) -> Result<Vec<f64>> {
    fixed_design_target_with(x, model, &BasisPursuitOptions::default())
}

pub fn fixed_design_target_with(x: &Matrix, model: &NonlinearModel, opts: &BasisPursuitOptions) -> Result<Vec<f64>> {
    let f = model.eval_rows(x)?;
    Ok(basis_pursuit(x, &f, opts)?.beta)
}
