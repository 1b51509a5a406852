//! Spectral projected gradient for the ℓ1-ball constrained misfit problem
//!
//! ```text
//! minimize ρ(y − Dx)  subject to  ‖x‖₁ ≤ τ.
//! ```
//!
//! The gradient with respect to `x` is `−Dᵀ∇ρ(r)` with `r = y − Dx`, so the
//! descent direction is `+Dᵀ∇ρ(r)`. Steps use the Barzilai–Borwein length,
//! clamped to `[step_min, step_max]`, and are accepted by a nonmonotone Armijo
//! test against the largest of the last `ls_memory` objective values, halving
//! along the projected direction on rejection.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::l1ball::project;
use crate::losses::LossModel;
use crate::operator::Dictionary;
use crate::{norm2, norm_inf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauConfig {
    pub max_iters: usize,
    /// Stop when `‖x − P(x − ∇)‖∞ ≤ opt_tol·(1 + ‖y‖₂)`.
    pub opt_tol: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub ls_memory: usize,
    pub ls_sufficient_decrease: f64,
    pub ls_max_backtracks: usize,
    /// Stop when `ρ(r) ≤ value_tol·(1 + ρ(y))`. Every loss is nonnegative with
    /// minimum zero, so this bounds the suboptimality directly. It is the only
    /// test that can fire for least squares when a zero-misfit point lies
    /// inside the ball, where `∇ρ` keeps unit norm.
    pub value_tol: f64,
}

impl Default for TauConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            opt_tol: 1e-6,
            step_min: 1e-16,
            step_max: 1e16,
            ls_memory: 10,
            ls_sufficient_decrease: 1e-4,
            ls_max_backtracks: 30,
            value_tol: 1e-10,
        }
    }
}

impl TauConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.opt_tol, self.step_min, self.step_max, self.ls_sufficient_decrease];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.value_tol >= 0.0) {
            return Err(Error::Domain(format!(
                "tolerances and step bounds must be positive: {self:?}"
            )));
        }
        if self.max_iters == 0 || self.ls_memory == 0 || self.ls_max_backtracks == 0 {
            return Err(Error::Domain(format!("iteration limits must be positive: {self:?}")));
        }
        if self.step_min >= self.step_max {
            return Err(Error::Domain("step_min must be below step_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauStop {
    Optimal,
    IterationCap,
    /// No descent direction, or the line search ran out of backtracks.
    Stall,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Products {
    pub forward: usize,
    pub adjoint: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauSolution {
    /// Best iterate seen; `‖x‖₁ ≤ τ`.
    pub x: Vec<f64>,
    /// `ρ(residual)`, evaluated on the stored residual.
    pub value: f64,
    /// `y − Dx`, recomputed from `x`.
    pub residual: Vec<f64>,
    pub iterations: usize,
    pub products: Products,
    pub converged: bool,
    pub reason: TauStop,
}

pub(crate) fn residual(d: &Dictionary, y: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let mut r = d.apply(x)?;
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri = yi - *ri;
    }
    Ok(r)
}

fn numerical(message: impl Into<String>, iterations: usize, x: &[f64]) -> Error {
    Error::NumericalFailure {
        message: message.into(),
        iterations,
        iterate: x.to_vec(),
    }
}

pub fn solve_tau(
    d: &Dictionary,
    y: &[f64],
    model: &LossModel,
    tau: f64,
    x0: Option<&[f64]>,
    cfg: &TauConfig,
) -> Result<TauSolution> {
    cfg.validate()?;
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("τ must be finite and nonnegative, got {tau}")));
    }
    if y.len() != d.rows() {
        return Err(Error::DimensionMismatch {
            context: "measurement",
            expected: d.rows(),
            actual: y.len(),
        });
    }
    let n = d.cols();
    let mut products = Products::default();

    let mut x = match x0 {
        Some(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "warm start",
                    expected: n,
                    actual: w.len(),
                });
            }
            project(w, tau)?.x
        }
        None => vec![0.0; n],
    };

    if tau == 0.0 {
        let residual = residual(d, y, &x)?;
        products.forward += 1;
        let value = model.value(&residual)?;
        return Ok(TauSolution {
            x,
            value,
            residual,
            iterations: 0,
            products,
            converged: true,
            reason: TauStop::Optimal,
        });
    }

    let pg_tol = cfg.opt_tol * (1.0 + norm2(y));
    let value_floor = cfg.value_tol * (1.0 + model.value(y)?);

    let mut r = residual(d, y, &x)?;
    products.forward += 1;
    let mut f = model.value(&r)?;
    if !f.is_finite() {
        return Err(numerical("non-finite loss at the starting point", 0, &x));
    }
    let mut g = neg_gradient(d, model, &r, &mut products)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(numerical("non-finite gradient at the starting point", 0, &x));
    }

    let mut history: VecDeque<f64> = VecDeque::with_capacity(cfg.ls_memory);
    history.push_back(f);
    let mut best_f = f;
    let mut best_x = x.clone();

    let mut pg = projected_step_norm(&x, &g, 1.0, tau)?;
    let mut step = if pg > 0.0 {
        (1.0 / pg).clamp(cfg.step_min, cfg.step_max)
    } else {
        1.0
    };
    let mut iterations = 0;
    let mut dd = vec![0.0; d.rows()];
    let mut rn = vec![0.0; d.rows()];

    let reason = loop {
        if f <= value_floor || pg <= pg_tol {
            break TauStop::Optimal;
        }
        if iterations >= cfg.max_iters {
            break TauStop::IterationCap;
        }
        iterations += 1;

        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
        let dir: Vec<f64> = project(&trial, tau)?.x.iter().zip(&x).map(|(p, xi)| p - xi).collect();
        let gtd = crate::dot(&g, &dir);
        if !(gtd < 0.0) {
            break TauStop::Stall;
        }
        d.apply_into(&dir, &mut dd)?;
        products.forward += 1;

        let f_ref = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha = 1.0;
        let mut backtracks = 0;
        let accepted = loop {
            for ((o, ri), di) in rn.iter_mut().zip(&r).zip(&dd) {
                *o = ri - alpha * di;
            }
            let fn_ = model.value(&rn)?;
            if !fn_.is_finite() {
                return Err(numerical("non-finite loss during line search", iterations, &x));
            }
            if fn_ <= f_ref + cfg.ls_sufficient_decrease * alpha * gtd {
                break Some(fn_);
            }
            backtracks += 1;
            if backtracks > cfg.ls_max_backtracks {
                break None;
            }
            alpha *= 0.5;
        };
        let Some(f_new) = accepted else {
            break TauStop::Stall;
        };

        let x_new: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
        let g_new = neg_gradient(d, model, &rn, &mut products)?;
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(numerical("non-finite gradient", iterations, &x_new));
        }

        let mut sts = 0.0;
        let mut sty = 0.0;
        for i in 0..n {
            let s = x_new[i] - x[i];
            sts += s * s;
            sty += s * (g_new[i] - g[i]);
        }
        step = if sty <= 0.0 {
            cfg.step_max
        } else {
            (sts / sty).clamp(cfg.step_min, cfg.step_max)
        };

        x = x_new;
        g = g_new;
        std::mem::swap(&mut r, &mut rn);
        f = f_new;
        if history.len() == cfg.ls_memory {
            history.pop_front();
        }
        history.push_back(f);
        if f < best_f {
            best_f = f;
            best_x.clone_from(&x);
        }
        pg = projected_step_norm(&x, &g, 1.0, tau)?;
    };

    let residual = residual(d, y, &best_x)?;
    products.forward += 1;
    let value = model.value(&residual)?;
    if !value.is_finite() {
        return Err(numerical(
            "non-finite loss at the returned iterate",
            iterations,
            &best_x,
        ));
    }
    Ok(TauSolution {
        x: best_x,
        value,
        residual,
        iterations,
        products,
        converged: reason == TauStop::Optimal,
        reason,
    })
}

/// `∇_x ρ(y − Dx) = −Dᵀ∇ρ(r)`.
fn neg_gradient(d: &Dictionary, model: &LossModel, r: &[f64], products: &mut Products) -> Result<Vec<f64>> {
    let gl = model.gradient(r)?;
    let mut g = d.apply_adjoint(&gl)?;
    products.adjoint += 1;
    for v in &mut g {
        *v = -*v;
    }
    Ok(g)
}

fn projected_step_norm(x: &[f64], g: &[f64], step: f64, tau: f64) -> Result<f64> {
    let trial: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - step * gi).collect();
    let p = project(&trial, tau)?.x;
    Ok(p.iter().zip(x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// `λ = ‖Dᵀ∇ρ(r)‖∞` at a solution; for convex losses `−λ` is the slope of the
/// Pareto frontier `ν(τ)` at that solution.
pub fn dual_certificate(d: &Dictionary, model: &LossModel, solution: &TauSolution) -> Result<f64> {
    let gl = model.gradient(&solution.residual)?;
    Ok(norm_inf(&d.apply_adjoint(&gl)?))
}
