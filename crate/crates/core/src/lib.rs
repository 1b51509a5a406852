//! Minimum ℓ1-norm solutions under a misfit constraint,
//!
//! ```text
//! minimize ‖x‖₁  subject to  ρ(y − Dx) ≤ σ,
//! ```
//!
//! for least-squares, Huber and (nonconvex) Student's t misfits `ρ`.
//!
//! The constrained problem is solved through its Pareto frontier
//! `ψ(τ) = ν(τ) − σ`, where `ν(τ)` is the optimal misfit subject to `‖x‖₁ ≤ τ`.
//! Each evaluation of `ψ` is a projected-gradient solve over the ℓ1 ball
//! ([`spg`]); the root `τ_σ` is found with a derivative-free bracketing method
//! from the Regula Falsi family ([`rootfind`]). Bracketing needs no convexity of
//! the frontier, so the same driver handles the Student's t loss, where Newton's
//! method on `ψ` has no guarantee.
//!
//! The initial bracket is `[0, τ_MF]` with `τ_MF` the ℓ1 norm of the
//! method-of-frames decomposition ([`operator::Dictionary::mof_decomposition`]).
//!
//! ```
//! use l1pareto::{Dictionary, LossModel, RfMethod, SigmaProblem, LevelSetOptions};
//!
//! let d = Dictionary::dense(1, 2, vec![1.0, 0.0]).unwrap();
//! let y = [1.0];
//! let prob = SigmaProblem::new(&d, &y, LossModel::least_squares(), 0.2).unwrap();
//! let report = l1pareto::solve_sigma(&prob, RfMethod::Illinois, &LevelSetOptions::default()).unwrap();
//! assert!(report.converged);
//! assert!((report.x_norm1 - 0.8).abs() < 1e-6);
//! ```

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod l1ball;
pub mod levelset;
pub mod losses;
pub mod operator;
pub mod problems;
pub mod rootfind;
pub mod spg;

pub use error::{Error, Result};
pub use l1ball::{project, ProjectionResult};
pub use levelset::{
    bracket_initial, count_nnz, newton_solve_sigma, pareto_psi, sample_pareto_curve, solve_sigma, BracketStart,
    LevelSetOptions, SigmaProblem, SigmaReport, SigmaStop,
};
pub use losses::{loss_gradient, loss_value, LossKind, LossModel};
pub use operator::{Dictionary, LinearMap, MofFallback, MofSolution};
pub use problems::{
    gen_instance, read_problem, recovery_error, write_problem, DictKind, Dispersion, ProblemInstance, SyntheticSpec,
};
pub use rootfind::{
    mu_factor, rf_step, secant_intersection, solve_root, solve_root_bracketed, Bracket, RfMethod, RootOptions,
    RootReport, RootStop,
};
pub use spg::{dual_certificate, solve_tau, Products, TauConfig, TauSolution, TauStop};

/// ‖x‖₁, summed in index order.
pub fn norm1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Eight independent partial sums; fixed order keeps results deterministic.
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}
