//! Additive nonlinear regression functions over Gaussian designs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{build_covariance, CovarianceSpec, Matrix, RngState};

/// One additive component of `f⁰`. Variable indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Term {
    /// `coef · sin(freq · x_a · x_b)`
    SinProduct { a: usize, b: usize, coef: f64, freq: f64 },
    /// `coef · sin(freq · x_a) · x_b`
    SinLinearProduct { a: usize, b: usize, coef: f64, freq: f64 },
    /// `coef · (x_var − shift)²`
    ShiftedSquare { var: usize, shift: f64, coef: f64 },
    /// `coef · x_var³`
    Cubic { var: usize, coef: f64 },
    /// `coef · x_var`
    Linear { var: usize, coef: f64 },
}

impl Term {
    pub fn vars(&self) -> Vec<usize> {
        match *self {
            Term::SinProduct { a, b, .. } | Term::SinLinearProduct { a, b, .. } => {
                if a == b {
                    vec![a]
                } else {
                    vec![a, b]
                }
            }
            Term::ShiftedSquare { var, .. } | Term::Cubic { var, .. } | Term::Linear { var, .. } => vec![var],
        }
    }

    #[inline]
    pub fn eval(&self, x: impl Fn(usize) -> f64) -> f64 {
        match *self {
            Term::SinProduct { a, b, coef, freq } => coef * (freq * x(a) * x(b)).sin(),
            Term::SinLinearProduct { a, b, coef, freq } => coef * (freq * x(a)).sin() * x(b),
            Term::ShiftedSquare { var, shift, coef } => {
                let d = x(var) - shift;
                coef * d * d
            }
            Term::Cubic { var, coef } => {
                let v = x(var);
                coef * v * v * v
            }
            Term::Linear { var, coef } => coef * x(var),
        }
    }

    /// Adds `Cov(term(X), X_l)` for every `l`, for `X ~ N(0, Σ)`.
    ///
    /// Both sine terms are even under `x ↦ −x` and therefore uncorrelated
    /// with every coordinate; the polynomial terms follow from Isserlis.
    pub fn add_gamma(&self, sigma: &Matrix, out: &mut [f64]) {
        let (k, c) = match *self {
            Term::SinProduct { .. } | Term::SinLinearProduct { .. } => return,
            Term::ShiftedSquare { var, shift, coef } => (var, -2.0 * shift * coef),
            Term::Cubic { var, coef } => (var, 3.0 * coef * sigma[(var, var)]),
            Term::Linear { var, coef } => (var, coef),
        };
        for (l, o) in out.iter_mut().enumerate() {
            *o += c * sigma[(k, l)];
        }
    }

    /// `E[term(X)]` in closed form where one exists.
    pub fn exact_mean(&self, sigma: &Matrix) -> Option<f64> {
        match *self {
            Term::SinProduct { a, b, .. } => {
                // Odd in x_a alone when x_a is independent of x_b.
                if a != b && sigma[(a, b)] == 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
            Term::SinLinearProduct { a, b, coef, freq } => {
                // E[sin(ωx_a) x_b] = Σ_ab ω e^{−ω²Σ_aa/2}.
                let saa = sigma[(a, a)];
                Some(coef * sigma[(a, b)] * freq * (-0.5 * freq * freq * saa).exp())
            }
            Term::ShiftedSquare { var, shift, coef } => Some(coef * (sigma[(var, var)] + shift * shift)),
            Term::Cubic { .. } | Term::Linear { .. } => Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    /// The illustration with a `5·sin` interaction instead of `2·sin`.
    Illustration,
    Custom,
}

impl std::str::FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M1" => Ok(ModelId::M1),
            "M2" => Ok(ModelId::M2),
            "M3" => Ok(ModelId::M3),
            "M4" => Ok(ModelId::M4),
            "ILLUSTRATION" => Ok(ModelId::Illustration),
            _ => Err(Error::InvalidArgument(format!(
                "unknown model `{s}` (expected M1, M2, M3, M4 or illustration)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelId::M1 => "M1",
            ModelId::M2 => "M2",
            ModelId::M3 => "M3",
            ModelId::M4 => "M4",
            ModelId::Illustration => "illustration",
            ModelId::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// User-facing description of a model (the JSON form of a custom model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub covariance: CovarianceSpec,
    #[serde(default)]
    pub intercept: f64,
    #[serde(default = "unit")]
    pub noise_sd: f64,
    pub terms: Vec<Term>,
}

fn unit() -> f64 {
    1.0
}

/// `Y = f⁰(X) + ξ` with `X ~ N_p(0, Σ)` and `ξ ~ N(0, noise_sd²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearModel {
    pub id: ModelId,
    pub p: usize,
    pub intercept: f64,
    pub terms: Vec<Term>,
    pub noise_sd: f64,
    pub covariance: CovarianceSpec,
    partition: Vec<Vec<usize>>,
}

const PI: f64 = std::f64::consts::PI;

impl NonlinearModel {
    pub fn new(id: ModelId, spec: ModelSpec) -> Result<Self> {
        let p = spec.covariance.dim();
        if p == 0 {
            return Err(Error::InvalidArgument("model dimension must be >= 1".into()));
        }
        if !(spec.noise_sd > 0.0) || !spec.noise_sd.is_finite() {
            return Err(Error::InvalidArgument(format!("noise_sd must be positive, got {}", spec.noise_sd)));
        }
        if !spec.intercept.is_finite() {
            return Err(Error::InvalidArgument("intercept must be finite".into()));
        }
        for t in &spec.terms {
            if let Some(&v) = t.vars().iter().find(|&&v| v >= p) {
                return Err(Error::InvalidArgument(format!("term uses variable {v} but p = {p}")));
            }
        }
        let partition = finest_partition(&spec.terms);
        Ok(NonlinearModel {
            id,
            p,
            intercept: spec.intercept,
            terms: spec.terms,
            noise_sd: spec.noise_sd,
            covariance: spec.covariance,
            partition,
        })
    }

    pub fn custom(spec: ModelSpec) -> Result<Self> {
        Self::new(ModelId::Custom, spec)
    }

    /// The built-in simulation models at dimension `p ≥ 6`.
    pub fn builtin(id: ModelId, p: usize) -> Result<Self> {
        if p < 6 {
            return Err(Error::InvalidArgument(format!("built-in models need p >= 6, got {p}")));
        }
        let pair = CovarianceSpec::SinglePair { p, pair: (2, 3), rho: 0.8 };
        let toeplitz = CovarianceSpec::Toeplitz { p, rho: 0.8 };
        let friedman = |sin_coef: f64| {
            (
                -5.0,
                vec![
                    Term::SinProduct { a: 0, b: 1, coef: sin_coef, freq: PI },
                    Term::ShiftedSquare { var: 2, shift: 0.5, coef: 4.0 },
                    Term::Linear { var: 4, coef: 2.0 },
                    Term::Linear { var: 5, coef: 1.0 },
                ],
            )
        };
        let smooth = (
            0.0,
            vec![
                Term::SinLinearProduct { a: 0, b: 1, coef: 1.0, freq: PI / 2.0 },
                Term::Cubic { var: 2, coef: 0.2 },
                Term::Linear { var: 4, coef: 1.0 },
                Term::Linear { var: 5, coef: 0.5 },
            ],
        );
        let (covariance, (intercept, terms)) = match id {
            ModelId::M1 => (pair, friedman(2.0)),
            ModelId::M2 => (pair, smooth),
            ModelId::M3 => (toeplitz, friedman(2.0)),
            ModelId::M4 => (toeplitz, smooth),
            ModelId::Illustration => (pair, friedman(5.0)),
            ModelId::Custom => {
                return Err(Error::InvalidArgument("custom models need a specification".into()))
            }
        };
        Self::new(
            id,
            ModelSpec {
                covariance,
                intercept,
                noise_sd: 1.0,
                terms,
            },
        )
    }

    pub fn from_name(name: &str, p: usize) -> Result<Self> {
        Self::builtin(name.parse()?, p)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            covariance: self.covariance.clone(),
            intercept: self.intercept,
            noise_sd: self.noise_sd,
            terms: self.terms.clone(),
        }
    }

    /// Same model at another dimension (extra coordinates are pure noise variables).
    pub fn with_dim(&self, p: usize) -> Result<Self> {
        let mut spec = self.spec();
        spec.covariance = spec.covariance.with_dim(p)?;
        Self::new(self.id, spec)
    }

    pub fn sigma(&self) -> Result<Matrix> {
        build_covariance(&self.covariance)
    }

    /// Finest partition of the active variables: each block is a connected
    /// group of variables linked through shared terms, sorted.
    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    /// Union of the partition, sorted.
    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.partition.iter().flatten().copied().collect();
        s.sort_unstable();
        s
    }

    /// `f⁰` at a point given by coordinate lookup.
    #[inline]
    pub fn eval_with(&self, x: impl Fn(usize) -> f64 + Copy) -> f64 {
        self.intercept + self.terms.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_with(|k| x[k])
    }

    /// `f⁰` at every row of `x`.
    pub fn eval_rows(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.p {
            return Err(Error::Dimension(format!("model has p = {} but design has {} columns", self.p, x.cols())));
        }
        Ok((0..x.rows()).map(|i| self.eval_with(|k| x[(i, k)])).collect())
    }

    /// The component of `f⁰` living on partition block `k` (no intercept).
    pub fn component(&self, k: usize) -> Result<Vec<Term>> {
        let block = self
            .partition
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("partition has {} blocks, asked for {k}", self.partition.len())))?;
        Ok(self
            .terms
            .iter()
            .filter(|t| t.vars().iter().all(|v| block.contains(v)))
            .cloned()
            .collect())
    }

    /// `Γ = Cov(f⁰(X), X)` in closed form.
    pub fn analytic_gamma(&self, sigma: &Matrix) -> Result<Vec<f64>> {
        if sigma.rows() != self.p || !sigma.is_square() {
            return Err(Error::Dimension(format!("covariance must be {0}x{0}", self.p)));
        }
        let mut gamma = vec![0.0; self.p];
        for t in &self.terms {
            t.add_gamma(sigma, &mut gamma);
        }
        Ok(gamma)
    }

    /// `E[f⁰(X)]`: exact per-term moments where available, Monte-Carlo
    /// (with standard error) for correlated sine products.
    pub fn mean_f0(&self, sigma: &Matrix, rng: RngState, draws: usize) -> Result<(f64, f64)> {
        let mut mean = self.intercept;
        let mut var = 0.0;
        for (i, t) in self.terms.iter().enumerate() {
            if let Some(m) = t.exact_mean(sigma) {
                mean += m;
                continue;
            }
            if draws < 2 {
                return Err(Error::InvalidArgument("Monte-Carlo mean needs at least 2 draws".into()));
            }
            let vars = t.vars();
            let sub = super::population::restrict(sigma, &vars);
            let sampler = crate::numerics::MvnSampler::new(&sub)?;
            let mut gen = rng.derive(&[i as u64]).generator();
            let mut g = vec![0.0; vars.len()];
            let mut x = vec![0.0; vars.len()];
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..draws {
                gen.fill_normal(&mut g);
                sampler.transform(&g, &mut x);
                let v = t.eval(|k| x[vars.iter().position(|&w| w == k).unwrap()]);
                s += v;
                s2 += v * v;
            }
            let n = draws as f64;
            let m = s / n;
            mean += m;
            var += (s2 / n - m * m).max(0.0) / n;
        }
        Ok((mean, var.sqrt()))
    }
}

fn finest_partition(terms: &[Term]) -> Vec<Vec<usize>> {
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for t in terms {
        let mut merged = t.vars();
        blocks.retain(|b| {
            if b.iter().any(|v| merged.contains(v)) {
                merged.extend(b);
                false
            } else {
                true
            }
        });
        merged.sort_unstable();
        merged.dedup();
        blocks.push(merged);
    }
    blocks.sort_by_key(|b| b[0]);
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_structure() {
        let m = NonlinearModel::builtin(ModelId::M1, 10).unwrap();
        assert_eq!(m.support(), vec![0, 1, 2, 4, 5]);
        assert_eq!(m.partition(), &[vec![0, 1], vec![2], vec![4], vec![5]]);
        // f(0) = −5 + 4·0.25
        assert!((m.eval(&[0.0; 10]) + 4.0).abs() < 1e-15);
        let m2 = NonlinearModel::builtin(ModelId::M2, 6).unwrap();
        let x = [1.0, 2.0, 1.0, 0.0, 1.0, 2.0];
        assert!((m2.eval(&x) - (2.0 + 0.2 + 1.0 + 1.0)).abs() < 1e-12);
        assert!(NonlinearModel::builtin(ModelId::M1, 5).is_err());
    }

    #[test]
    fn partition_merges_shared_variables() {
        let terms = vec![
            Term::Linear { var: 3, coef: 1.0 },
            Term::SinProduct { a: 1, b: 3, coef: 1.0, freq: 1.0 },
            Term::Cubic { var: 0, coef: 1.0 },
        ];
        assert_eq!(finest_partition(&terms), vec![vec![0], vec![1, 3]]);
    }

    #[test]
    fn block_gamma_by_hand() {
        // Γ₃ = −4, Γ₄ = −3.2 for the shifted square under Σ₃₄ = 0.8.
        let m = NonlinearModel::builtin(ModelId::M1, 8).unwrap();
        let g = m.analytic_gamma(&m.sigma().unwrap()).unwrap();
        let want = [0.0, 0.0, -4.0, -3.2, 2.0, 1.0, 0.0, 0.0];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn custom_spec_from_json() {
        let spec: ModelSpec = serde_json::from_str(
            r#"{"covariance": {"kind": "identity", "p": 4},
                "terms": [{"kind": "linear", "var": 0, "coef": 2.0}]}"#,
        )
        .unwrap();
        let m = NonlinearModel::custom(spec).unwrap();
        assert_eq!(m.noise_sd, 1.0);
        assert_eq!(m.support(), vec![0]);
        let bad: ModelSpec = serde_json::from_str(
            r#"{"covariance": {"kind": "identity", "p": 2},
                "terms": [{"kind": "cubic", "var": 5, "coef": 1.0}]}"#,
        )
        .unwrap();
        assert!(NonlinearModel::custom(bad).is_err());
    }
}
