//! Seeded Monte-Carlo coverage experiments for random and fixed designs.
//!
//! Every replicate draws from streams derived from `(base_seed, replicate,
//! purpose)`, so results do not depend on scheduling. Aggregation is an ordered
//! fold over replicate ids.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{fit_desparsified, fit_desparsified_with, nodewise_cache, InferenceConfig, NodewiseCache, VarianceMode};
use crate::numerics::{hash_words, Matrix, MvnSampler, RngState};
use crate::oracle::{
    analytic_projection, fixed_design_target_with, sparsity_curve, uniform_r_grid, ModelId, ModelSpec,
    NonlinearModel, SparsityCurve, NONZERO_THRESHOLD,
};
use crate::parallel::{self, Execution};
use crate::solvers::BasisPursuitOptions;

/// Share of failed replicates above which a report is marked invalid.
pub const MAX_FAILURE_RATE: f64 = 0.05;

const TAG_DESIGN: u64 = 0x5844;
const TAG_NOISE: u64 = 0x5849;
const TAG_INFERENCE: u64 = 0x494e;
const TAG_FIGURE: u64 = 0x4647;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMode {
    /// Fresh `X` and `ξ` in every replicate; truth is the population projection.
    #[default]
    Random,
    /// One fixed `X`, fresh `ξ`; truth is the basis-pursuit representation.
    Fixed,
}

impl std::str::FromStr for DesignMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(DesignMode::Random),
            "fixed" => Ok(DesignMode::Fixed),
            other => Err(Error::InvalidArgument(format!("unknown design mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: NonlinearModel,
    pub n: usize,
    pub design_mode: DesignMode,
    pub replicates: usize,
    pub alpha: f64,
    pub variance_mode: VarianceMode,
    pub base_seed: u64,
    pub fixed_design_seed: Option<u64>,
    /// Tuning shared by all replicates; `seed`, `alpha` and `variance_mode`
    /// are overridden per replicate.
    pub inference: InferenceConfig,
    pub basis_pursuit: BasisPursuitOptions,
    pub execution: Execution,
}

impl Scenario {
    pub fn new(model: NonlinearModel, n: usize, design_mode: DesignMode, replicates: usize, base_seed: u64) -> Self {
        let variance_mode = match design_mode {
            DesignMode::Random => VarianceMode::Sandwich,
            DesignMode::Fixed => VarianceMode::Classic,
        };
        Scenario {
            model,
            n,
            design_mode,
            replicates,
            alpha: 0.05,
            variance_mode,
            base_seed,
            fixed_design_seed: match design_mode {
                DesignMode::Fixed => Some(base_seed),
                DesignMode::Random => None,
            },
            inference: InferenceConfig::default(),
            basis_pursuit: BasisPursuitOptions::default(),
            execution: Execution::default(),
        }
    }

    pub fn p(&self) -> usize {
        self.model.p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.n < 10 {
            return Err(Error::InvalidArgument(format!("n must be >= 10, got {}", self.n)));
        }
        if p < 2 {
            return Err(Error::InvalidArgument(format!("p must be >= 2, got {p}")));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.design_mode == DesignMode::Fixed {
            if self.fixed_design_seed.is_none() {
                return Err(Error::InvalidArgument("fixed design needs a fixed_design_seed".into()));
            }
            if self.n > p {
                return Err(Error::InvalidArgument(format!(
                    "fixed design needs n <= p for the basis-pursuit target, got n = {} > p = {p}",
                    self.n
                )));
            }
        }
        Ok(())
    }

    fn stream(&self, replicate: usize, tag: u64) -> RngState {
        RngState::new(hash_words(&[self.base_seed, replicate as u64, tag]), 0)
    }

    fn fixed_design(&self, sampler: &MvnSampler) -> Result<Matrix> {
        let seed = self.fixed_design_seed.unwrap_or(self.base_seed);
        sampler.sample(RngState::new(hash_words(&[seed, TAG_DESIGN]), 0), self.n)
    }

    pub fn echo(&self) -> ScenarioEcho {
        ScenarioEcho {
            model: self.model.id,
            model_spec: self.model.spec(),
            n: self.n,
            p: self.p(),
            design_mode: self.design_mode,
            replicates: self.replicates,
            alpha: self.alpha,
            variance_mode: self.variance_mode,
            base_seed: self.base_seed,
            fixed_design_seed: self.fixed_design_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEcho {
    pub model: ModelId,
    pub model_spec: ModelSpec,
    pub n: usize,
    pub p: usize,
    pub design_mode: DesignMode,
    pub replicates: usize,
    pub alpha: f64,
    pub variance_mode: VarianceMode,
    pub base_seed: u64,
    pub fixed_design_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub truth: Vec<f64>,
    pub covered: Vec<bool>,
    pub lengths: Vec<f64>,
}

impl ReplicateResult {
    pub fn new(replicate: usize, ci_lower: Vec<f64>, ci_upper: Vec<f64>, truth: Vec<f64>) -> Self {
        let covered = (0..truth.len())
            .map(|j| ci_lower[j] <= truth[j] && truth[j] <= ci_upper[j])
            .collect();
        let lengths = ci_lower.iter().zip(&ci_upper).map(|(l, u)| u - l).collect();
        ReplicateResult {
            replicate,
            ci_lower,
            ci_upper,
            truth,
            covered,
            lengths,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

pub type ReplicateOutcome = std::result::Result<ReplicateResult, ReplicateFailure>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateRow {
    /// One-based coordinate index.
    pub j: usize,
    pub beta0: f64,
    pub coverage: f64,
    pub mean_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: ScenarioEcho,
    /// `None` when the index set is empty.
    pub avgcov_s0: Option<f64>,
    pub avgcov_s0c: Option<f64>,
    pub avglen_s0: Option<f64>,
    pub avglen_s0c: Option<f64>,
    pub s0: Vec<usize>,
    pub replicates_ok: usize,
    pub replicates_failed: usize,
    pub failures: Vec<ReplicateFailure>,
    pub valid: bool,
    pub per_coordinate: Vec<CoordinateRow>,
    /// Seconds; not part of the serialized document.
    #[serde(skip)]
    pub wall_time: f64,
}

impl CoverageReport {
    /// `model avgcov_s0 avgcov_s0c avglen_s0 avglen_s0c`
    pub fn aggregate_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
        format!(
            "{} {} {} {} {}",
            self.scenario.model,
            f(self.avgcov_s0),
            f(self.avgcov_s0c),
            f(self.avglen_s0),
            f(self.avglen_s0c)
        )
    }
}

fn mean_over(rows: &[CoordinateRow], idx: &[usize], value: impl Fn(&CoordinateRow) -> f64) -> Option<f64> {
    if idx.is_empty() {
        return None;
    }
    Some(idx.iter().map(|&j| value(&rows[j])).sum::<f64>() / idx.len() as f64)
}

/// Active set of a truth vector (zero-based).
pub fn active_set(truth: &[f64]) -> Vec<usize> {
    (0..truth.len()).filter(|&j| truth[j].abs() > NONZERO_THRESHOLD).collect()
}

/// Ordered fold of replicate outcomes into a report.
pub fn aggregate(echo: ScenarioEcho, truth: &[f64], outcomes: &[ReplicateOutcome]) -> CoverageReport {
    let p = truth.len();
    let ok: Vec<&ReplicateResult> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failures: Vec<ReplicateFailure> = outcomes.iter().filter_map(|o| o.as_ref().err().cloned()).collect();
    let k = ok.len();
    let mut hits = vec![0usize; p];
    let mut len_sum = vec![0.0; p];
    for r in &ok {
        for j in 0..p {
            hits[j] += r.covered[j] as usize;
            len_sum[j] += r.lengths[j];
        }
    }
    let per_coordinate: Vec<CoordinateRow> = (0..p)
        .map(|j| CoordinateRow {
            j: j + 1,
            beta0: truth[j],
            coverage: if k == 0 { f64::NAN } else { hits[j] as f64 / k as f64 },
            mean_length: if k == 0 { f64::NAN } else { len_sum[j] / k as f64 },
        })
        .collect();
    let s0 = active_set(truth);
    let s0c: Vec<usize> = (0..p).filter(|j| !s0.contains(j)).collect();
    let total = outcomes.len();
    let valid = k > 0 && (failures.len() as f64) <= MAX_FAILURE_RATE * total as f64;
    let avg = |idx: &[usize], value: fn(&CoordinateRow) -> f64| {
        if k == 0 {
            None
        } else {
            mean_over(&per_coordinate, idx, value)
        }
    };
    CoverageReport {
        scenario: echo,
        avgcov_s0: avg(&s0, |r| r.coverage),
        avgcov_s0c: avg(&s0c, |r| r.coverage),
        avglen_s0: avg(&s0, |r| r.mean_length),
        avglen_s0c: avg(&s0c, |r| r.mean_length),
        s0: s0.iter().map(|j| j + 1).collect(),
        replicates_ok: k,
        replicates_failed: failures.len(),
        failures,
        valid,
        per_coordinate,
        wall_time: 0.0,
    }
}

/// Post-processing applied to each replicate's `(lower, upper)` before
/// coverage is evaluated.
pub type IntervalHook<'a> = &'a (dyn Fn(usize, &mut Vec<f64>, &mut Vec<f64>) + Sync);

/// Everything a scenario shares across replicates.
pub struct Prepared {
    pub truth: Vec<f64>,
    sampler: MvnSampler,
    /// Fixed design: `X`, `f⁰(X)` and the nodewise fits shared by all replicates.
    fixed: Option<(Matrix, Vec<f64>, NodewiseCache)>,
}

pub fn prepare(s: &Scenario) -> Result<Prepared> {
    s.validate()?;
    let sampler = MvnSampler::new(&s.model.sigma()?)?;
    match s.design_mode {
        DesignMode::Random => Ok(Prepared {
            truth: analytic_projection(&s.model)?.beta0,
            sampler,
            fixed: None,
        }),
        DesignMode::Fixed => {
            let x = s.fixed_design(&sampler)?;
            let f = s.model.eval_rows(&x)?;
            let truth = fixed_design_target_with(&x, &s.model, &s.basis_pursuit)?;
            let seed = s.fixed_design_seed.unwrap_or(s.base_seed);
            let config = InferenceConfig {
                seed: hash_words(&[seed, TAG_INFERENCE]),
                ..s.inference
            };
            let cache = nodewise_cache(&x, &config)?;
            Ok(Prepared {
                truth,
                sampler,
                fixed: Some((x, f, cache)),
            })
        }
    }
}

/// Intervals of one replicate for each requested variance mode.
pub fn run_replicate(
    s: &Scenario,
    prep: &Prepared,
    replicate: usize,
    modes: &[VarianceMode],
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let n = s.n;
    let (x_owned, f_owned);
    let (x, f, cache): (&Matrix, &[f64], Option<&NodewiseCache>) = match &prep.fixed {
        Some((x, f, cache)) => (x, f, Some(cache)),
        None => {
            x_owned = prep.sampler.sample(s.stream(replicate, TAG_DESIGN), n)?;
            f_owned = s.model.eval_rows(&x_owned)?;
            (&x_owned, &f_owned, None)
        }
    };
    let mut gen = s.stream(replicate, TAG_NOISE).generator();
    let y: Vec<f64> = f.iter().map(|v| v + s.model.noise_sd * gen.standard_normal()).collect();
    let config = InferenceConfig {
        seed: hash_words(&[s.base_seed, replicate as u64, TAG_INFERENCE]),
        alpha: s.alpha,
        ..s.inference
    };
    let fit = match cache {
        Some(cache) => fit_desparsified_with(x, &y, &config, cache)?,
        None => fit_desparsified(x, &y, &config)?,
    };
    modes
        .iter()
        .map(|&m| {
            let r = fit.report(m, s.alpha)?;
            Ok((r.ci_lower, r.ci_upper))
        })
        .collect()
}

/// Runs the scenario once and aggregates one report per variance mode,
/// sharing the fits between modes.
pub fn run_scenario_modes(s: &Scenario, modes: &[VarianceMode], hook: Option<IntervalHook>) -> Result<Vec<CoverageReport>> {
    let start = Instant::now();
    let prep = prepare(s)?;
    let per_rep = parallel::map(s.execution, s.replicates, |r| run_replicate(s, &prep, r, modes));
    let mut reports = Vec::with_capacity(modes.len());
    for (mi, &mode) in modes.iter().enumerate() {
        let outcomes: Vec<ReplicateOutcome> = per_rep
            .iter()
            .enumerate()
            .map(|(r, res)| match res {
                Ok(intervals) => {
                    let (mut lo, mut hi) = intervals[mi].clone();
                    if let Some(h) = hook {
                        h(r, &mut lo, &mut hi);
                    }
                    Ok(ReplicateResult::new(r, lo, hi, prep.truth.clone()))
                }
                Err(e) => Err(ReplicateFailure {
                    replicate: r,
                    message: e.to_string(),
                }),
            })
            .collect();
        let mut echo = s.echo();
        echo.variance_mode = mode;
        reports.push(aggregate(echo, &prep.truth, &outcomes));
    }
    let elapsed = start.elapsed().as_secs_f64();
    reports.iter_mut().for_each(|r| r.wall_time = elapsed);
    Ok(reports)
}

pub fn run_scenario_with(s: &Scenario, hook: Option<IntervalHook>) -> Result<CoverageReport> {
    Ok(run_scenario_modes(s, &[s.variance_mode], hook)?.remove(0))
}

pub fn run_scenario(s: &Scenario) -> Result<CoverageReport> {
    run_scenario_with(s, None)
}

/// `(β⁰_j, coverage)` for the active coordinates, ascending in `|β⁰_j|`.
pub fn coverage_by_coefficient(results: &[ReplicateResult]) -> Result<Vec<(usize, f64, f64)>> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidArgument("no replicate results".into()))?;
    let truth = &first.truth;
    if results.iter().any(|r| &r.truth != truth) {
        return Err(Error::InvalidArgument("replicates do not share a truth vector".into()));
    }
    let mut rows: Vec<(usize, f64, f64)> = active_set(truth)
        .into_iter()
        .map(|j| {
            let k = results.iter().filter(|r| r.covered[j]).count();
            (j, truth[j], k as f64 / results.len() as f64)
        })
        .collect();
    rows.sort_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)));
    Ok(rows)
}

/// Basis-pursuit sparsity curves over `runs` independent fixed designs.
pub fn sparsity_figure_data(s: &Scenario, runs: usize, r_grid: &[f64]) -> Result<Vec<SparsityCurve>> {
    if s.design_mode != DesignMode::Fixed {
        return Err(Error::InvalidArgument("sparsity figure data needs the fixed design mode".into()));
    }
    s.validate()?;
    let sampler = MvnSampler::new(&s.model.sigma()?)?;
    let seed = s.fixed_design_seed.unwrap_or(s.base_seed);
    parallel::try_map(s.execution, runs, |run| {
        let x = sampler.sample(RngState::new(hash_words(&[seed, run as u64, TAG_FIGURE]), 0), s.n)?;
        let beta = fixed_design_target_with(&x, &s.model, &s.basis_pursuit)?;
        sparsity_curve(&beta, r_grid)
    })
}

/// The 101-point grid `0, 0.01, …, 1`.
pub fn figure_r_grid() -> Vec<f64> {
    uniform_r_grid(101)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(j: usize, covered: &[bool]) -> ReplicateResult {
        let truth = vec![1.0; covered.len()];
        let lo = covered.iter().map(|&c| if c { 0.0 } else { 2.0 }).collect();
        let hi = vec![3.0; covered.len()];
        ReplicateResult::new(j, lo, hi, truth)
    }

    #[test]
    fn coverage_fractions() {
        let one = coverage_by_coefficient(&[result(0, &[true, true])]).unwrap();
        assert!(one.iter().all(|r| r.2 == 1.0));
        let two = coverage_by_coefficient(&[result(0, &[true]), result(1, &[false])]).unwrap();
        assert_eq!(two[0].2, 0.5);
        assert!(coverage_by_coefficient(&[]).is_err());
    }

    #[test]
    fn aggregation_splits_active_set() {
        let model = NonlinearModel::builtin(ModelId::M1, 6).unwrap();
        let s = Scenario::new(model, 20, DesignMode::Random, 2, 1);
        let truth = vec![0.0, 0.0, -4.0, 0.0, 2.0, 1.0];
        let mk = |covered_s0: bool| {
            let lo: Vec<f64> = truth.iter().map(|t| if covered_s0 || *t == 0.0 { t - 1.0 } else { t + 1.0 }).collect();
            let hi: Vec<f64> = truth.iter().map(|t| t + 1.5).collect();
            (lo, hi)
        };
        let (l1, h1) = mk(true);
        let (l2, h2) = mk(false);
        let outcomes = vec![
            Ok(ReplicateResult::new(0, l1, h1, truth.clone())),
            Ok(ReplicateResult::new(1, l2, h2, truth.clone())),
            Err(ReplicateFailure { replicate: 2, message: "x".into() }),
        ];
        let rep = aggregate(s.echo(), &truth, &outcomes);
        assert_eq!(rep.s0, vec![3, 5, 6]);
        assert_eq!(rep.avgcov_s0, Some(0.5));
        assert_eq!(rep.avgcov_s0c, Some(1.0));
        assert_eq!(rep.avglen_s0c, Some(2.5));
        assert_eq!(rep.replicates_failed, 1);
        assert!(!rep.valid);
    }

    #[test]
    fn validation() {
        let model = NonlinearModel::builtin(ModelId::M2, 8).unwrap();
        let mut s = Scenario::new(model, 20, DesignMode::Fixed, 1, 1);
        assert!(s.validate().is_err()); // n > p
        s.n = 8;
        assert!(s.validate().is_err()); // n < 10
        s.design_mode = DesignMode::Random;
        s.n = 10;
        assert!(s.validate().is_ok());
        s.replicates = 0;
        assert!(s.validate().is_err());
    }
}
