use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use hdinfer::error::Error;
use hdinfer::inference::{build_report, InferenceConfig, NodewiseOptions};
use hdinfer::io::{self, format_f64};
use hdinfer::numerics::RngState;
use hdinfer::oracle::{
    analytic_projection, population_beta_mc_with, sparsity_curve, McOptions, ModelSpec, NonlinearModel,
    PopulationProjection,
};
use hdinfer::parallel::{with_threads, Execution};
use hdinfer::simharness::{figure_r_grid, run_scenario, sparsity_figure_data, DesignMode, Scenario};
use hdinfer::solvers::{basis_pursuit as solve_bp, BasisPursuitOptions};

use crate::args::{BasisPursuitArgs, InferArgs, OracleArgs, OracleMethod, SimulateArgs, SparsityCurveArgs};
use crate::Failure;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_P: usize = 1000;
const DEFAULT_N: usize = 200;
const DEFAULT_REPLICATES: usize = 100;
const DEFAULT_DRAWS: usize = 1_000_000;

fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Input(format!("{flag} is required")))
}

fn execution(threads: usize) -> Execution {
    if threads == 1 {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

/// Timing and seed provenance, written next to the primary output as
/// `<output>.log` so the output itself stays reproducible byte for byte.
struct RunLog {
    command: &'static str,
    seed: u64,
    threads: usize,
    started: SystemTime,
    clock: Instant,
}

impl RunLog {
    fn start(command: &'static str, seed: u64, threads: usize) -> Self {
        RunLog {
            command,
            seed,
            threads,
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    fn finish(self, outputs: &[&Path], status: &str) -> Result<(), Failure> {
        let Some(primary) = outputs.first() else {
            return Ok(());
        };
        let started = self.started.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let threads = if self.threads == 0 { "default".to_string() } else { self.threads.to_string() };
        let mut text = format!(
            "command: {}\nargs: {}\nseed: {}\nthreads: {}\nstarted_unix: {started:.3}\nelapsed_seconds: {:.3}\nstatus: {status}\n",
            self.command,
            std::env::args().skip(1).collect::<Vec<_>>().join(" "),
            self.seed,
            threads,
            self.clock.elapsed().as_secs_f64(),
        );
        for o in outputs {
            text.push_str(&format!("output: {}\n", o.display()));
        }
        let mut log = primary.as_os_str().to_owned();
        log.push(".log");
        io::write_atomic(Path::new(&log), text.as_bytes())?;
        Ok(())
    }
}

fn load_model(model: Option<&str>, spec: Option<&Path>, p: Option<usize>) -> Result<NonlinearModel, Failure> {
    match (model, spec) {
        (Some(name), _) => Ok(NonlinearModel::from_name(name, p.unwrap_or(DEFAULT_P))?),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let spec: ModelSpec = serde_json::from_str(&text)
                .map_err(|e| Failure::Input(format!("{}: line {}: {e}", path.display(), e.line())))?;
            let m = NonlinearModel::custom(spec)?;
            match p {
                Some(p) if p != m.p => Ok(m.with_dim(p)?),
                _ => Ok(m),
            }
        }
        (None, None) => Err(Failure::Input("--model or --model-spec is required".into())),
    }
}

fn check_alpha(alpha: f64) -> Result<f64, Failure> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Failure::Input(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn infer(a: InferArgs) -> Result<(), Failure> {
    let design = required(a.design, "--design")?;
    let response = required(a.response, "--response")?;
    let out = required(a.out, "--out")?;
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let threads = a.threads.unwrap_or(0);
    let defaults = InferenceConfig::default();
    let config = InferenceConfig {
        variance_mode: a.variance.unwrap_or_default(),
        alpha: check_alpha(a.alpha.unwrap_or(defaults.alpha))?,
        lambda: a.lambda,
        lambda_x: a.lambda_x,
        nodewise: NodewiseOptions::with_method(a.nodewise.unwrap_or_default()),
        folds: a.folds.unwrap_or(defaults.folds),
        grid_size: a.grid_size.unwrap_or(defaults.grid_size),
        seed,
        execution: execution(threads),
        ..defaults
    };
    if config.folds < 2 {
        return Err(Failure::Input("--folds must be at least 2".into()));
    }
    if config.grid_size == 0 {
        return Err(Failure::Input("--grid-size must be positive".into()));
    }
    let log = RunLog::start("infer", seed, threads);
    let x = io::read_matrix(&design)?;
    let y = io::read_vector(&response)?;
    if y.len() != x.rows() {
        return Err(Failure::Input(format!(
            "{}: {} responses for a design with {} rows ({})",
            response.display(),
            y.len(),
            x.rows(),
            design.display()
        )));
    }
    let report = with_threads(threads, || build_report(&x, &y, &config))?;
    io::write_json(&out, &report)?;
    println!(
        "{} of {} coordinates significant at alpha = {}",
        report.significant(),
        report.b_hat.len(),
        config.alpha
    );
    log.finish(&[&out], "ok")
}

pub fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let model = load_model(a.model.as_deref(), a.model_spec.as_deref(), a.p)?;
    let out = required(a.out, "--out")?;
    let table = a.table.unwrap_or_else(|| out.with_extension("csv"));
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let threads = a.threads.unwrap_or(0);
    let mut s = Scenario::new(
        model,
        a.n.unwrap_or(DEFAULT_N),
        a.design.unwrap_or_default(),
        a.replicates.unwrap_or(DEFAULT_REPLICATES),
        seed,
    );
    if let Some(v) = a.variance {
        s.variance_mode = v;
    }
    if let Some(alpha) = a.alpha {
        s.alpha = check_alpha(alpha)?;
    }
    if let Some(fs) = a.fixed_design_seed {
        if s.design_mode != DesignMode::Fixed {
            return Err(Failure::Input("--fixed-design-seed needs --design fixed".into()));
        }
        s.fixed_design_seed = Some(fs);
    }
    s.execution = execution(threads);
    s.inference.execution = execution(threads);
    s.validate()?;

    let log = RunLog::start("simulate", seed, threads);
    let report = with_threads(threads, || run_scenario(&s))?;
    io::write_json(&out, &report)?;
    io::write_atomic(&table, io::format_coordinate_table(&report.per_coordinate).as_bytes())?;
    println!("{}", report.aggregate_line());
    if report.valid {
        log.finish(&[&out, &table], "ok")
    } else {
        log.finish(&[&out, &table], "invalid report")?;
        Err(Failure::Numerical(format!(
            "invalid report: {} of {} replicates failed",
            report.replicates_failed,
            report.replicates_failed + report.replicates_ok
        )))
    }
}

fn oracle_table(model: &NonlinearModel, proj: &PopulationProjection, seed: u64) -> String {
    let mut text = match proj.method {
        hdinfer::oracle::ProjectionMethod::Analytic => format!("# model={} p={} method=analytic\n", model.id, model.p),
        hdinfer::oracle::ProjectionMethod::MonteCarlo => format!(
            "# model={} p={} method=monte-carlo draws={} seed={seed}\n",
            model.id, model.p, proj.mc_draws
        ),
    };
    text.push_str("j,beta0,mc_se\n");
    for (j, b) in proj.beta0.iter().enumerate() {
        let se = proj.mc_se.get(j).copied().unwrap_or(0.0);
        text.push_str(&format!("{},{},{}\n", j + 1, format_f64(*b), format_f64(se)));
    }
    text
}

pub fn oracle(a: OracleArgs) -> Result<(), Failure> {
    let model = load_model(a.model.as_deref(), a.model_spec.as_deref(), a.p)?;
    let out = required(a.out, "--out")?;
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let threads = a.threads.unwrap_or(0);
    let method = a.method.unwrap_or(if a.draws.is_some() {
        OracleMethod::MonteCarlo
    } else {
        OracleMethod::Analytic
    });
    let log = RunLog::start("oracle", seed, threads);
    let proj = match method {
        OracleMethod::Analytic => analytic_projection(&model)?,
        OracleMethod::MonteCarlo => {
            let opts = McOptions {
                execution: execution(threads),
                ..McOptions::new(a.draws.unwrap_or(DEFAULT_DRAWS))
            };
            with_threads(threads, || population_beta_mc_with(&model, RngState::new(seed, 0), &opts))?
        }
    };
    io::write_atomic(&out, oracle_table(&model, &proj, seed).as_bytes())?;
    let head: Vec<String> = proj.beta0.iter().take(6).map(|b| format!("{b:.4}")).collect();
    println!(
        "beta0 = ({}{}), {} nonzeros",
        head.join(", "),
        if proj.beta0.len() > 6 { ", ..." } else { "" },
        hdinfer::oracle::count_nonzero(&proj.beta0)
    );
    log.finish(&[&out], "ok")
}

pub fn basis_pursuit(a: BasisPursuitArgs) -> Result<(), Failure> {
    let design = required(a.design, "--design")?;
    let target = required(a.target, "--target")?;
    let out = required(a.out, "--out")?;
    let log = RunLog::start("basis-pursuit", a.seed.unwrap_or(DEFAULT_SEED), a.threads.unwrap_or(0));
    let x = io::read_matrix(&design)?;
    let f = io::read_vector(&target)?;
    if f.len() != x.rows() {
        return Err(Failure::Input(format!(
            "{}: target of length {} for a design with {} rows",
            target.display(),
            f.len(),
            x.rows()
        )));
    }
    if x.rows() > x.cols() {
        return Err(Failure::Input(format!(
            "{}: basis pursuit needs no more rows than columns, got {}x{}",
            design.display(),
            x.rows(),
            x.cols()
        )));
    }
    let sol = match solve_bp(&x, &f, &BasisPursuitOptions::default()) {
        Ok(sol) => sol,
        Err(Error::RankDeficient(msg)) => return Err(Failure::Input(format!("{}: {msg}", design.display()))),
        Err(e) => return Err(e.into()),
    };
    let comment = format!(
        "feasibility_gap={} l1_norm={}",
        format_f64(sol.feasibility_gap),
        format_f64(sol.l1_norm)
    );
    io::write_vector(&out, &sol.beta, Some(&comment))?;
    println!(
        "l1 norm {:.6}, feasibility gap {:.3e}, {} nonzeros",
        sol.l1_norm,
        sol.feasibility_gap,
        hdinfer::oracle::count_nonzero(&sol.beta)
    );
    log.finish(&[&out], "ok")
}

pub fn sparsity_curve_cmd(a: SparsityCurveArgs) -> Result<(), Failure> {
    let out: PathBuf = required(a.out, "--out")?;
    let seed = a.seed.unwrap_or(DEFAULT_SEED);
    let threads = a.threads.unwrap_or(0);
    let grid = figure_r_grid();
    let log = RunLog::start("sparsity-curve", seed, threads);
    let text = if let Some(path) = a.beta {
        let beta = io::read_vector(&path)?;
        let curve = sparsity_curve(&beta, &grid)?;
        println!("norm at r=0: {}", curve.norms[0]);
        io::format_curve(&curve)
    } else {
        let model = load_model(a.model.as_deref(), a.model_spec.as_deref(), a.p)?;
        match a.design.unwrap_or_default() {
            DesignMode::Random => {
                if a.runs.is_some() || a.n.is_some() {
                    return Err(Failure::Input("--runs and --n apply to --design fixed only".into()));
                }
                let curve = sparsity_curve(&analytic_projection(&model)?.beta0, &grid)?;
                println!("norm at r=0: {}", curve.norms[0]);
                io::format_curve(&curve)
            }
            DesignMode::Fixed => {
                let mut s = Scenario::new(model, a.n.unwrap_or(DEFAULT_N), DesignMode::Fixed, 1, seed);
                s.execution = execution(threads);
                s.validate()?;
                let runs = a.runs.unwrap_or(1);
                if runs == 0 {
                    return Err(Failure::Input("--runs must be positive".into()));
                }
                let curves = with_threads(threads, || sparsity_figure_data(&s, runs, &grid))?;
                for (k, c) in curves.iter().enumerate() {
                    println!("run {}: norm at r=0: {}", k + 1, c.norms[0]);
                }
                io::format_figure_data(&curves)
            }
        }
    };
    io::write_atomic(&out, text.as_bytes())?;
    log.finish(&[&out], "ok")
}

