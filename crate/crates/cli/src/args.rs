//! Command-line flags. Each command's flag struct doubles as the schema of
//! its `--config` JSON file (kebab-case keys, unknown keys rejected); flags
//! given on the command line win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use hdinfer::inference::{NodewiseMethod, VarianceMode};
use hdinfer::simharness::DesignMode;

use crate::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "hdinfer",
    version,
    about = "De-sparsified Lasso inference for misspecified high-dimensional linear models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Confidence intervals and p-values for every coefficient of a dataset.
    Infer(InferArgs),
    /// Monte-Carlo coverage study for a model.
    Simulate(SimulateArgs),
    /// Population projection β⁰ of a model under its Gaussian design.
    Oracle(OracleArgs),
    /// Minimum-ℓ1 solution of Xβ = f.
    BasisPursuit(BasisPursuitArgs),
    /// ℓ_r sparsity curve of a coefficient vector or of a model's target.
    SparsityCurve(SparsityCurveArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Infer(_) => "infer",
            Command::Simulate(_) => "simulate",
            Command::Oracle(_) => "oracle",
            Command::BasisPursuit(_) => "basis-pursuit",
            Command::SparsityCurve(_) => "sparsity-curve",
        }
    }
}

/// Copies every field still unset on the command line from the config file.
macro_rules! fill {
    ($flags:ident, $file:ident; $($field:ident),* $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field; } )*
    };
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: line {}: {e}", path.display(), e.line())))
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct InferArgs {
    /// Design matrix CSV (`rows,cols` header).
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Response vector CSV.
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// Output JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// sandwich (random design) or classic (fixed design).
    #[arg(long)]
    pub variance: Option<VarianceMode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Main Lasso penalty (cross-validated when absent).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Nodewise penalty shared by all columns.
    #[arg(long)]
    pub lambda_x: Option<f64>,
    /// lasso or sqrt-lasso.
    #[arg(long)]
    pub nodewise: Option<NodewiseMethod>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker budget (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON file supplying any of the flags above.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl InferArgs {
    pub fn resolve(mut self) -> Result<Self, Failure> {
        if let Some(path) = self.config.take() {
            let file: Self = read_config(&path)?;
            fill!(self, file; design, response, out, variance, alpha, lambda, lambda_x, nodewise, folds, grid_size, seed, threads);
        }
        Ok(self)
    }
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateArgs {
    /// Built-in model: M1, M2, M3, M4 or illustration.
    #[arg(long)]
    pub model: Option<String>,
    /// JSON model description (covariance plus additive terms).
    #[arg(long, conflicts_with = "model")]
    pub model_spec: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// random or fixed.
    #[arg(long)]
    pub design: Option<DesignMode>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Default: sandwich for random, classic for fixed design.
    #[arg(long)]
    pub variance: Option<VarianceMode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Seed of the single design used in fixed mode (default: --seed).
    #[arg(long)]
    pub fixed_design_seed: Option<u64>,
    /// Output JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-coordinate CSV (default: the report path with a `.csv` extension).
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn resolve(mut self) -> Result<Self, Failure> {
        if let Some(path) = self.config.take() {
            let file: Self = read_config(&path)?;
            if self.model.is_some() || self.model_spec.is_some() {
                fill!(self, file; n);
            } else {
                fill!(self, file; model, model_spec, n);
            }
            fill!(self, file; p, design, replicates, variance, alpha, fixed_design_seed, out, table, seed, threads);
        }
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct OracleArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, conflicts_with = "model")]
    pub model_spec: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Default: monte-carlo when --draws is given, analytic otherwise.
    #[arg(long, value_enum)]
    pub method: Option<OracleMethod>,
    #[arg(long)]
    pub draws: Option<usize>,
    /// Output CSV with columns `j,beta0,mc_se`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl OracleArgs {
    pub fn resolve(mut self) -> Result<Self, Failure> {
        if let Some(path) = self.config.take() {
            let file: Self = read_config(&path)?;
            if self.model.is_none() && self.model_spec.is_none() {
                fill!(self, file; model, model_spec);
            }
            fill!(self, file; p, method, draws, out, seed, threads);
        }
        Ok(self)
    }
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BasisPursuitArgs {
    /// Design matrix CSV with no more rows than columns.
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Target vector CSV.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Output vector CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl BasisPursuitArgs {
    pub fn resolve(mut self) -> Result<Self, Failure> {
        if let Some(path) = self.config.take() {
            let file: Self = read_config(&path)?;
            fill!(self, file; design, target, out, seed, threads);
        }
        Ok(self)
    }
}

#[derive(Args, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SparsityCurveArgs {
    /// Coefficient vector CSV.
    #[arg(long, conflicts_with_all = ["model", "model_spec"])]
    pub beta: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, conflicts_with = "model")]
    pub model_spec: Option<PathBuf>,
    #[arg(long)]
    pub p: Option<usize>,
    /// random: population β⁰; fixed: one basis-pursuit target per run.
    #[arg(long)]
    pub design: Option<DesignMode>,
    /// Sample size of the fixed designs.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Output CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

impl SparsityCurveArgs {
    pub fn resolve(mut self) -> Result<Self, Failure> {
        if let Some(path) = self.config.take() {
            let file: Self = read_config(&path)?;
            if self.beta.is_none() && self.model.is_none() && self.model_spec.is_none() {
                fill!(self, file; beta, model, model_spec);
            }
            fill!(self, file; p, design, n, runs, out, seed, threads);
        }
        Ok(self)
    }
}
