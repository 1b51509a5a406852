//! Command implementations behind the `l1pareto` binary. Every command
//! returns its CSV text so it can be tested without spawning a process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use l1pareto::{
    gen_instance, newton_solve_sigma, read_problem, sample_pareto_curve, solve_sigma, write_problem, DictKind,
    Dispersion, Error, LevelSetOptions, LossModel, ProblemInstance, RfMethod, SigmaProblem, SigmaReport, SyntheticSpec,
    TauConfig,
};

pub const REPORT_HEADER: &str = "problem,M,N,loss,sigma,method,rho_r,x_norm1,nnz,tau_solves,converged";

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or input files; exit code 2.
    Usage(String),
    /// The solver failed; exit code 3.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_)
            | Error::DimensionMismatch { .. }
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::UnsupportedModel(_) => CliError::Usage(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

const PROBLEM_HELP: &str = "Problem file, or a generator spec `gen:<preset|key=value,...>`.

Presets: `gauss-en` (256x1024 Gaussian, 32-sparse, noiseless) and `outliers`
(175x600 Parseval, 20-sparse, noise variance 0.005, five outliers of
variance 4). A preset may be followed by overrides, e.g. `gen:outliers,m=100`.

Keys: m, n, k, dict=gaussian|parseval, noise, outliers, outlier-var,
dispersion=var|std. The seed comes from --seed.";

#[derive(Debug, Parser)]
#[command(
    name = "l1pareto",
    version,
    about = "Minimum ℓ1-norm solutions under a misfit constraint, via root finding on the Pareto frontier"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem for one loss, σ ratio and method; prints a CSV row.
    Solve(SolveArgs),
    /// Run the cross product of problems × σ ratios × methods × losses.
    Experiment(ExperimentArgs),
    /// Sample ν(τ) on an even grid over [0, τ_MF].
    Pareto(ParetoArgs),
    /// Generate a synthetic instance and write it as a problem file.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    /// Huber width δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Student's t parameter ν.
    #[arg(long)]
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Iteration cap of each ℓ1-ball subproblem solve.
    #[arg(long, default_value_t = 10_000)]
    pub max_iters: usize,
    /// Relative optimality tolerance of the subproblem solver.
    #[arg(long, default_value_t = 1e-6)]
    pub opt_tol: f64,
    /// Nonmonotone line-search memory.
    #[arg(long, default_value_t = 10)]
    pub ls_memory: usize,
    /// Root-finding success tolerance relative to σ.
    #[arg(long, default_value_t = 1e-3)]
    pub ftol_rel: f64,
    /// Width tolerance on τ (default 1e-6·τ_MF).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Cap on subproblem solves per σ.
    #[arg(long, default_value_t = 1000)]
    pub max_root_iter: usize,
    /// Start every subproblem from zero instead of the previous solution.
    #[arg(long)]
    pub no_warm_start: bool,
}

impl SolverArgs {
    pub fn tau_config(&self) -> TauConfig {
        TauConfig {
            max_iters: self.max_iters,
            opt_tol: self.opt_tol,
            ls_memory: self.ls_memory,
            ..TauConfig::default()
        }
    }

    pub fn options(&self) -> LevelSetOptions {
        LevelSetOptions {
            eps: self.eps,
            ftol_rel: self.ftol_rel,
            max_root_iter: self.max_root_iter,
            warm_start: !self.no_warm_start,
            tau: self.tau_config(),
            ..LevelSetOptions::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long, help = "Problem file or gen:<spec>", long_help = PROBLEM_HELP)]
    pub problem: String,
    /// ls | huber | student
    #[arg(long, default_value = "ls")]
    pub loss: String,
    /// σ as a multiple of ρ(y).
    #[arg(long)]
    pub sigma_ratio: f64,
    /// rf | illinois | pegasus | ab | newton
    #[arg(long, default_value = "illinois")]
    pub method: String,
    /// Seed for generated problems.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub loss_args: LossArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(long = "problem", required = true, help = "Problem file or gen:<spec>; repeatable", long_help = PROBLEM_HELP)]
    pub problems: Vec<String>,
    /// σ as multiples of ρ(y), comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.05, 0.005])]
    pub sigma_ratios: Vec<f64>,
    /// Comma separated; newton pairs with convex losses only.
    #[arg(long, value_delimiter = ',', default_values_t = ["rf".to_string(), "illinois".into(), "pegasus".into(), "ab".into(), "newton".into()])]
    pub methods: Vec<String>,
    /// Comma separated: ls, huber, student.
    #[arg(long, value_delimiter = ',', default_values_t = ["ls".to_string(), "huber".into(), "student".into()])]
    pub losses: Vec<String>,
    /// Seed for generated problems.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for independent cells. Output order does not change.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub loss_args: LossArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ParetoArgs {
    #[arg(long, help = "Problem file or gen:<spec>", long_help = PROBLEM_HELP)]
    pub problem: String,
    /// ls | huber | student
    #[arg(long, default_value = "ls")]
    pub loss: String,
    /// Number of evenly spaced τ values, endpoints included.
    #[arg(long, default_value_t = 25)]
    pub grid_points: usize,
    /// Seed for generated problems.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub loss_args: LossArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, help = "Generator spec gen:<spec>", long_help = PROBLEM_HELP)]
    pub problem: String,
    /// Seed for generated problems.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output problem file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Rf(RfMethod),
    Newton,
}

impl MethodChoice {
    pub fn parse(token: &str) -> CliResult<Self> {
        if token == "newton" {
            return Ok(MethodChoice::Newton);
        }
        token.parse().map(MethodChoice::Rf).map_err(|_| {
            CliError::Usage(format!(
                "unknown method '{token}', expected rf, illinois, pegasus, ab or newton"
            ))
        })
    }

    pub fn token(&self) -> &'static str {
        match self {
            MethodChoice::Rf(m) => m.token(),
            MethodChoice::Newton => "newton",
        }
    }
}

pub fn parse_spec(source: &str, seed: u64) -> CliResult<SyntheticSpec> {
    let body = source
        .strip_prefix("gen:")
        .ok_or_else(|| CliError::Usage(format!("generator source must start with 'gen:', got '{source}'")))?;
    let mut spec = SyntheticSpec {
        m: 64,
        n: 256,
        k: 8,
        dict_kind: DictKind::Gaussian,
        noise_var: 0.0,
        n_outliers: 0,
        outlier_var: 0.0,
        dispersion: Dispersion::Variance,
        seed,
    };
    let bad = |item: &str| CliError::Usage(format!("bad generator item '{item}' in '{source}'"));
    for (i, item) in body.split(',').map(str::trim).filter(|s| !s.is_empty()).enumerate() {
        let Some((key, value)) = item.split_once('=') else {
            spec = match (i, item) {
                (0, "gauss-en") => SyntheticSpec::gauss_en(seed),
                (0, "outliers") => SyntheticSpec::outliers(seed),
                _ => return Err(bad(item)),
            };
            continue;
        };
        let count = || value.parse::<usize>().map_err(|_| bad(item));
        let real = || value.parse::<f64>().map_err(|_| bad(item));
        match key {
            "m" => spec.m = count()?,
            "n" => spec.n = count()?,
            "k" => spec.k = count()?,
            "noise" => spec.noise_var = real()?,
            "outliers" => spec.n_outliers = count()?,
            "outlier-var" => spec.outlier_var = real()?,
            "dict" => {
                spec.dict_kind = match value {
                    "gaussian" => DictKind::Gaussian,
                    "parseval" => DictKind::Parseval,
                    _ => return Err(bad(item)),
                }
            }
            "dispersion" => {
                spec.dispersion = match value {
                    "var" => Dispersion::Variance,
                    "std" => Dispersion::StdDev,
                    _ => return Err(bad(item)),
                }
            }
            _ => return Err(bad(item)),
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn load_problem(source: &str, seed: u64) -> CliResult<ProblemInstance> {
    if source.starts_with("gen:") {
        Ok(gen_instance(&parse_spec(source, seed)?)?)
    } else {
        read_problem(source).map_err(|e| CliError::Usage(format!("{source}: {e}")))
    }
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn report_row(
    problem: &str,
    inst: &ProblemInstance,
    loss: &LossModel,
    sigma: f64,
    method: MethodChoice,
    r: &SigmaReport,
) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        problem,
        inst.d.rows(),
        inst.d.cols(),
        loss.token(),
        float(sigma),
        method.token(),
        float(r.rho_r),
        float(r.x_norm1),
        r.nnz,
        r.tau_solves,
        r.converged
    )
}

fn na_row(problem: &str, inst: &ProblemInstance, loss: &LossModel, sigma: f64, method: MethodChoice) -> String {
    format!(
        "{},{},{},{},{},{},NA,NA,NA,NA,NA",
        problem,
        inst.d.rows(),
        inst.d.cols(),
        loss.token(),
        float(sigma),
        method.token()
    )
}

fn run_cell(
    inst: &ProblemInstance,
    loss: LossModel,
    sigma: f64,
    method: MethodChoice,
    opts: &LevelSetOptions,
) -> Result<SigmaReport, Error> {
    let prob = SigmaProblem::new(&inst.d, &inst.y, loss, sigma)?;
    match method {
        MethodChoice::Rf(m) => solve_sigma(&prob, m, opts),
        MethodChoice::Newton => newton_solve_sigma(&prob, opts),
    }
}

fn problem_label(source: &str) -> String {
    // keep the CSV column free of separators
    source.replace(',', ";")
}

pub fn cmd_solve(args: &SolveArgs) -> CliResult<String> {
    let loss = LossModel::from_token(&args.loss, args.loss_args.delta, args.loss_args.nu)?;
    let method = MethodChoice::parse(&args.method)?;
    if method == MethodChoice::Newton && !loss.is_convex() {
        return Err(CliError::Usage(format!(
            "method newton does not support the nonconvex {loss} loss"
        )));
    }
    if !(args.sigma_ratio >= 0.0) {
        return Err(CliError::Usage(format!(
            "σ ratio must be nonnegative, got {}",
            args.sigma_ratio
        )));
    }
    let inst = load_problem(&args.problem, args.seed)?;
    let sigma = args.sigma_ratio * loss.value(&inst.y)?;
    let report = run_cell(&inst, loss, sigma, method, &args.solver.options())?;
    Ok(format!(
        "{REPORT_HEADER}\n{}\n",
        report_row(&problem_label(&args.problem), &inst, &loss, sigma, method, &report)
    ))
}

/// Returns the CSV and whether any cell failed numerically.
pub fn cmd_experiment(args: &ExperimentArgs) -> CliResult<(String, bool)> {
    if args.sigma_ratios.is_empty() || args.methods.is_empty() || args.losses.is_empty() {
        return Err(CliError::Usage("experiment lists must be nonempty".into()));
    }
    if let Some(r) = args.sigma_ratios.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(CliError::Usage(format!("σ ratios must lie in (0, 1), got {r}")));
    }
    let methods = args
        .methods
        .iter()
        .map(|m| MethodChoice::parse(m))
        .collect::<CliResult<Vec<_>>>()?;
    let losses = args
        .losses
        .iter()
        .map(|l| LossModel::from_token(l, args.loss_args.delta, args.loss_args.nu))
        .collect::<Result<Vec<_>, _>>()?;
    let instances = args
        .problems
        .iter()
        .map(|p| load_problem(p, args.seed).map(|inst| (problem_label(p), inst)))
        .collect::<CliResult<Vec<_>>>()?;
    let opts = args.solver.options();

    let mut cells = Vec::new();
    for (pi, (_, inst)) in instances.iter().enumerate() {
        for &ratio in &args.sigma_ratios {
            for &method in &methods {
                for &loss in &losses {
                    let sigma = ratio * loss.value(&inst.y)?;
                    cells.push((pi, sigma, method, loss));
                }
            }
        }
    }

    let run = |&(pi, sigma, method, loss): &(usize, f64, MethodChoice, LossModel)| -> (String, bool) {
        let (label, inst) = &instances[pi];
        if method == MethodChoice::Newton && !loss.is_convex() {
            return (na_row(label, inst, &loss, sigma, method), false);
        }
        match run_cell(inst, loss, sigma, method, &opts) {
            Ok(r) => (report_row(label, inst, &loss, sigma, method, &r), false),
            Err(e) => {
                eprintln!("{label} {loss} σ={sigma} {}: {e}", method.token());
                (na_row(label, inst, &loss, sigma, method), true)
            }
        }
    };
    let rows: Vec<(String, bool)> = if args.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.parallel)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run).collect())
    } else {
        cells.iter().map(run).collect()
    };

    let mut out = format!("{REPORT_HEADER}\n");
    let mut failed = false;
    for (row, f) in rows {
        out.push_str(&row);
        out.push('\n');
        failed |= f;
    }
    Ok((out, failed))
}

pub fn cmd_pareto(args: &ParetoArgs) -> CliResult<String> {
    if args.grid_points < 2 {
        return Err(CliError::Usage("--grid-points must be at least 2".into()));
    }
    let loss = LossModel::from_token(&args.loss, args.loss_args.delta, args.loss_args.nu)?;
    let inst = load_problem(&args.problem, args.seed)?;
    let tau_mf = l1pareto::norm1(&inst.d.mof_decomposition(&inst.y)?);
    let last = (args.grid_points - 1) as f64;
    let taus: Vec<f64> = (0..args.grid_points).map(|i| tau_mf * i as f64 / last).collect();
    let prob = SigmaProblem::new(&inst.d, &inst.y, loss, 0.0)?;
    let curve = sample_pareto_curve(&prob, &taus, &args.solver.tau_config())?;
    let mut out = String::from("tau,nu\n");
    for (t, v) in curve {
        writeln!(out, "{},{}", float(t), float(v)).unwrap();
    }
    Ok(out)
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let inst = gen_instance(&parse_spec(&args.problem, args.seed)?)?;
    write_problem(&args.out, &inst)?;
    Ok(())
}

pub fn emit(text: &str, csv: Option<&Path>) -> CliResult<()> {
    match csv {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a).and_then(|t| emit(&t, a.csv.as_deref())).map(|_| 0),
        Command::Experiment(a) => {
            cmd_experiment(a).and_then(|(t, failed)| emit(&t, a.csv.as_deref()).map(|_| if failed { 3 } else { 0 }))
        }
        Command::Pareto(a) => cmd_pareto(a).and_then(|t| emit(&t, a.csv.as_deref())).map(|_| 0),
        Command::Gen(a) => cmd_gen(a).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("l1pareto: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_syntax() {
        let s = parse_spec("gen:outliers,m=100", 4).unwrap();
        assert_eq!((s.m, s.n, s.k, s.n_outliers, s.seed), (100, 600, 20, 5, 4));
        assert_eq!(s.dict_kind, DictKind::Parseval);
        let s = parse_spec("gen:m=10,n=20,k=3,dict=parseval,noise=0.1,dispersion=std", 0).unwrap();
        assert_eq!((s.m, s.n, s.k), (10, 20, 3));
        assert_eq!(s.dispersion, Dispersion::StdDev);
        assert!(parse_spec("gen:m=10,n=5", 0).is_err());
        assert!(parse_spec("gen:bogus", 0).is_err());
        assert!(parse_spec("gen:m=1,outliers", 0).is_err());
        assert!(parse_spec("file.txt", 0).is_err());
    }

    #[test]
    fn method_tokens() {
        assert_eq!(MethodChoice::parse("newton").unwrap(), MethodChoice::Newton);
        assert_eq!(
            MethodChoice::parse("ab").unwrap(),
            MethodChoice::Rf(RfMethod::AndersonBjorck)
        );
        assert_eq!(MethodChoice::parse("secant").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn error_classes() {
        assert_eq!(CliError::from(Error::UnsupportedModel("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::Stall { tau: 1.0, slope: 0.0 }).exit_code(), 3);
        assert_eq!(
            CliError::from(Error::RankDeficient {
                index: 0,
                pivot: 0.0,
                threshold: 1.0
            })
            .exit_code(),
            3
        );
    }
}
