//! Level-set driver: solves
//!
//! ```text
//! minimize ‖x‖₁  subject to  ρ(y − Dx) ≤ σ
//! ```
//!
//! by locating the root of `ψ(τ) = ν(τ) − σ`, where each evaluation of `ν` is
//! an ℓ1-ball constrained solve ([`solve_tau`]). The bracket `[0, τ_MF]` comes
//! for free: `ψ(0) = ρ(y) − σ` and, for a full-row-rank dictionary,
//! `ψ(τ_MF) = −σ`.

use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::operator::Dictionary;
use crate::rootfind::{solve_root_bracketed, Bracket, RfMethod, RootOptions, RootStop};
use crate::spg::{dual_certificate, residual, solve_tau, TauConfig, TauSolution, TauStop};
use crate::{norm1, norm_inf};

pub const DEFAULT_NNZ_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct SigmaProblem<'a> {
    pub d: &'a Dictionary,
    pub y: &'a [f64],
    pub model: LossModel,
    pub sigma: f64,
}

impl<'a> SigmaProblem<'a> {
    pub fn new(d: &'a Dictionary, y: &'a [f64], model: LossModel, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("σ must be finite and nonnegative, got {sigma}")));
        }
        if y.len() != d.rows() {
            return Err(Error::DimensionMismatch {
                context: "measurement",
                expected: d.rows(),
                actual: y.len(),
            });
        }
        Ok(Self { d, y, model, sigma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetOptions {
    /// Width tolerance on τ. `None` means `1e-6·τ_MF`.
    pub eps: Option<f64>,
    /// Success when `|ψ(τ)| ≤ ftol_rel·max(σ, 1e-12)`.
    pub ftol_rel: f64,
    pub max_root_iter: usize,
    /// Start each subproblem from the previous solution.
    pub warm_start: bool,
    pub nnz_threshold: f64,
    pub tau: TauConfig,
}

impl Default for LevelSetOptions {
    fn default() -> Self {
        Self {
            eps: None,
            ftol_rel: 1e-3,
            max_root_iter: 1000,
            warm_start: true,
            nnz_threshold: DEFAULT_NNZ_THRESHOLD,
            tau: TauConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaStop {
    /// `ρ(y) ≤ σ`, so `x = 0` is optimal without any subproblem solve.
    ZeroFeasible,
    /// `|ψ(τ)| ≤ ftol`.
    Residual,
    /// The τ bracket (or Newton step) shrank below `eps`.
    Width,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaReport {
    pub x_sigma: Vec<f64>,
    /// `ρ(y − Dx_σ)`.
    pub rho_r: f64,
    pub x_norm1: f64,
    pub nnz: usize,
    /// Final τ.
    pub tau_sigma: f64,
    pub tau_mf: f64,
    /// Number of [`solve_tau`] calls.
    pub tau_solves: usize,
    /// `(τ, ψ(τ))` for every subproblem solve, in order. The free bracket
    /// endpoints are not included.
    pub tau_trajectory: Vec<(f64, f64)>,
    /// Subproblem solves that ended on their iteration cap; their inexact
    /// values were used as-is.
    pub inexact_evaluations: usize,
    pub stop: SigmaStop,
    /// `x = 0` was feasible, or `|ρ(r_σ) − σ| ≤ ftol_rel·σ` holds.
    pub converged: bool,
}

impl SigmaReport {
    pub fn psi(&self, sigma: f64) -> f64 {
        self.rho_r - sigma
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BracketStart {
    Bracketed {
        bracket: Bracket,
        x_mf: Vec<f64>,
    },
    /// `ρ(y) ≤ σ`: the zero vector already solves the problem.
    ZeroFeasible {
        rho_y: f64,
    },
}

/// `(0, ρ(y) − σ)` and `(τ_MF, −σ)`, without any subproblem solve.
pub fn bracket_initial(prob: &SigmaProblem) -> Result<BracketStart> {
    let rho_y = prob.model.value(prob.y)?;
    if rho_y <= prob.sigma {
        return Ok(BracketStart::ZeroFeasible { rho_y });
    }
    let x_mf = prob.d.mof_decomposition(prob.y)?;
    let tau_mf = norm1(&x_mf);
    let bracket = Bracket::new(0.0, tau_mf, rho_y - prob.sigma, -prob.sigma)?;
    Ok(BracketStart::Bracketed { bracket, x_mf })
}

/// `ψ(τ) = ν(τ) − σ` together with the subproblem solution.
pub fn pareto_psi(prob: &SigmaProblem, tau: f64, warm: Option<&[f64]>, cfg: &TauConfig) -> Result<(f64, TauSolution)> {
    let sol = solve_tau(prob.d, prob.y, &prob.model, tau, warm, cfg)?;
    Ok((sol.value - prob.sigma, sol))
}

/// `#{i : |x_i| > rel_threshold·‖x‖∞}`.
pub fn count_nnz(x: &[f64], rel_threshold: f64) -> usize {
    let cut = rel_threshold * norm_inf(x);
    x.iter().filter(|v| v.abs() > cut).count()
}

struct Trace {
    solves: usize,
    trajectory: Vec<(f64, f64)>,
    inexact: usize,
    warm: Option<Vec<f64>>,
    solutions: Vec<(f64, Vec<f64>)>,
}

impl Trace {
    fn new() -> Self {
        Self {
            solves: 0,
            trajectory: vec![],
            inexact: 0,
            warm: None,
            solutions: vec![],
        }
    }

    fn evaluate(&mut self, prob: &SigmaProblem, tau: f64, opts: &LevelSetOptions) -> Result<TauSolution> {
        let warm = if opts.warm_start { self.warm.as_deref() } else { None };
        let (psi, sol) = pareto_psi(prob, tau, warm, &opts.tau)?;
        self.solves += 1;
        self.trajectory.push((tau, psi));
        if sol.reason == TauStop::IterationCap {
            self.inexact += 1;
        }
        self.warm = Some(sol.x.clone());
        self.solutions.push((tau, sol.x.clone()));
        Ok(sol)
    }

    fn solution_at(&self, tau: f64) -> Option<&[f64]> {
        self.solutions
            .iter()
            .rev()
            .find(|(t, _)| t.to_bits() == tau.to_bits())
            .map(|(_, x)| x.as_slice())
    }
}

fn ftol_for(prob: &SigmaProblem, opts: &LevelSetOptions) -> f64 {
    opts.ftol_rel * prob.sigma.max(1e-12)
}

fn finish(
    prob: &SigmaProblem,
    opts: &LevelSetOptions,
    x: Vec<f64>,
    tau_sigma: f64,
    tau_mf: f64,
    trace: Trace,
    stop: SigmaStop,
) -> Result<SigmaReport> {
    let rho_r = prob.model.value(&residual(prob.d, prob.y, &x)?)?;
    let converged = match stop {
        SigmaStop::ZeroFeasible => true,
        SigmaStop::IterationCap => false,
        SigmaStop::Residual | SigmaStop::Width => (rho_r - prob.sigma).abs() <= ftol_for(prob, opts),
    };
    Ok(SigmaReport {
        x_norm1: norm1(&x),
        nnz: count_nnz(&x, opts.nnz_threshold),
        x_sigma: x,
        rho_r,
        tau_sigma,
        tau_mf,
        tau_solves: trace.solves,
        tau_trajectory: trace.trajectory,
        inexact_evaluations: trace.inexact,
        stop,
        converged,
    })
}

fn zero_report(prob: &SigmaProblem, opts: &LevelSetOptions) -> Result<SigmaReport> {
    let x = vec![0.0; prob.d.cols()];
    finish(prob, opts, x, 0.0, f64::NAN, Trace::new(), SigmaStop::ZeroFeasible)
}

fn validate(opts: &LevelSetOptions) -> Result<()> {
    if !(opts.ftol_rel >= 0.0) || opts.eps.is_some_and(|e| !(e > 0.0)) || opts.max_root_iter == 0 {
        return Err(Error::Domain(format!("invalid level-set options: {opts:?}")));
    }
    opts.tau.validate()
}

/// Root finding on `ψ` with a Regula Falsi-type method.
pub fn solve_sigma(prob: &SigmaProblem, method: RfMethod, opts: &LevelSetOptions) -> Result<SigmaReport> {
    validate(opts)?;
    let (bracket, x_mf) = match bracket_initial(prob)? {
        BracketStart::ZeroFeasible { .. } => return zero_report(prob, opts),
        BracketStart::Bracketed { bracket, x_mf } => (bracket, x_mf),
    };
    let tau_mf = bracket.b;
    let root_opts = RootOptions {
        eps: opts.eps.unwrap_or(1e-6 * tau_mf),
        ftol: ftol_for(prob, opts),
        max_iter: opts.max_root_iter,
    };

    let mut trace = Trace::new();
    let report = solve_root_bracketed(
        |tau| Ok(trace.evaluate(prob, tau, opts)?.value - prob.sigma),
        bracket,
        method,
        &root_opts,
    )?;

    let x = if let Some(x) = trace.solution_at(report.root) {
        x.to_vec()
    } else if report.root == 0.0 {
        vec![0.0; prob.d.cols()]
    } else {
        x_mf
    };
    let stop = match report.stop {
        RootStop::ExactZero | RootStop::Residual => SigmaStop::Residual,
        RootStop::Width => SigmaStop::Width,
        RootStop::IterationCap => SigmaStop::IterationCap,
    };
    finish(prob, opts, x, report.root, tau_mf, trace, stop)
}

/// Newton's method on `ψ` with slope `ψ′(τ) = −‖Dᵀ∇ρ(r_τ)‖∞`, iterates
/// clipped to `[0, τ_MF]`. Convex losses only.
pub fn newton_solve_sigma(prob: &SigmaProblem, opts: &LevelSetOptions) -> Result<SigmaReport> {
    if !prob.model.is_convex() {
        return Err(Error::UnsupportedModel(format!(
            "Newton's method needs a convex Pareto frontier; {} loss is nonconvex",
            prob.model
        )));
    }
    validate(opts)?;
    let (bracket, _) = match bracket_initial(prob)? {
        BracketStart::ZeroFeasible { .. } => return zero_report(prob, opts),
        BracketStart::Bracketed { bracket, x_mf } => (bracket, x_mf),
    };
    let tau_mf = bracket.b;
    let eps = opts.eps.unwrap_or(1e-6 * tau_mf);
    let ftol = ftol_for(prob, opts);

    // At τ = 0 the solution is x = 0 with residual y; no subproblem needed.
    let mut tau = 0.0;
    let mut psi = bracket.fa;
    let mut slope = norm_inf(&prob.d.apply_adjoint(&prob.model.gradient(prob.y)?)?);
    let mut x = vec![0.0; prob.d.cols()];
    let mut trace = Trace::new();

    let mut stop = SigmaStop::IterationCap;
    for _ in 0..opts.max_root_iter {
        if slope < 1e-14 {
            return Err(Error::Stall { tau, slope });
        }
        let next = (tau + psi / slope).clamp(0.0, tau_mf);
        let sol = trace.evaluate(prob, next, opts)?;
        psi = sol.value - prob.sigma;
        let step = (next - tau).abs();
        tau = next;
        slope = dual_certificate(prob.d, &prob.model, &sol)?;
        x = sol.x;
        if psi.abs() <= ftol {
            stop = SigmaStop::Residual;
            break;
        }
        if step <= eps {
            stop = SigmaStop::Width;
            break;
        }
    }
    finish(prob, opts, x, tau, tau_mf, trace, stop)
}

/// `(τ, ν(τ))` over an ascending grid, each solve warm-started from the last.
pub fn sample_pareto_curve(prob: &SigmaProblem, taus: &[f64], cfg: &TauConfig) -> Result<Vec<(f64, f64)>> {
    if taus.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Domain("τ grid must be sorted ascending".into()));
    }
    let mut warm: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let sol = solve_tau(prob.d, prob.y, &prob.model, tau, warm.as_deref(), cfg)?;
        out.push((tau, sol.value));
        warm = Some(sol.x);
    }
    Ok(out)
}
