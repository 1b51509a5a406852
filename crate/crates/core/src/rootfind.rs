//! Derivative-free bracketing root finders of the Regula Falsi family.
//!
//! Each step intersects the secant through `(a, f(a))`, `(b, f(b))` with the
//! axis at `c`. If `f(c)` has the opposite sign of `f(b)` the bracket becomes
//! `(b, c)`; otherwise `b ← c` and the retained value `f(a)` is scaled by `μ`.
//! The methods differ only in `μ`:
//!
//! | method          | μ                                              |
//! |-----------------|------------------------------------------------|
//! | Regula Falsi    | 1                                              |
//! | Illinois        | 1/2                                            |
//! | Pegasus         | f(b) / (f(b) + f(c))                           |
//! | Anderson–Björck | 1 − f(c)/f(b), or 1/2 when f(c)/f(b) ≥ 1       |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RfMethod {
    RegulaFalsi,
    Illinois,
    Pegasus,
    AndersonBjorck,
}

impl RfMethod {
    pub const ALL: [RfMethod; 4] = [
        RfMethod::RegulaFalsi,
        RfMethod::Illinois,
        RfMethod::Pegasus,
        RfMethod::AndersonBjorck,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            RfMethod::RegulaFalsi => "rf",
            RfMethod::Illinois => "illinois",
            RfMethod::Pegasus => "pegasus",
            RfMethod::AndersonBjorck => "ab",
        }
    }
}

impl fmt::Display for RfMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for RfMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(RfMethod::RegulaFalsi),
            "illinois" => Ok(RfMethod::Illinois),
            "pegasus" => Ok(RfMethod::Pegasus),
            "ab" => Ok(RfMethod::AndersonBjorck),
            other => Err(Error::Domain(format!(
                "unknown root-finding method '{other}', expected rf, illinois, pegasus or ab"
            ))),
        }
    }
}

/// Bracket state. `b` is always the most recent point; `a` and `b` are not
/// ordered. After μ-scaling `fa` is no longer the function value at `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub a: f64,
    pub b: f64,
    pub fa: f64,
    pub fb: f64,
}

impl Bracket {
    pub fn new(a: f64, b: f64, fa: f64, fb: f64) -> Result<Self> {
        let br = Self { a, b, fa, fb };
        if ![a, b, fa, fb].iter().all(|v| v.is_finite()) {
            return Err(Error::Domain(format!("bracket has non-finite entries: {br:?}")));
        }
        if !(fa * fb < 0.0) {
            return Err(Error::Bracketing { a, b, fa, fb });
        }
        Ok(br)
    }

    pub fn width(&self) -> f64 {
        (self.b - self.a).abs()
    }

    fn holds_sign_invariant(&self) -> bool {
        self.fa * self.fb < 0.0
    }
}

/// `c = b − f(b)/s_ab` with `s_ab = (f(b) − f(a))/(b − a)`.
///
/// The convex-combination form `(a·f(b) − b·f(a))/(f(b) − f(a))` is used,
/// which lies in the bracket whenever the signs differ. If rounding still puts
/// `c` on an endpoint, the midpoint is returned instead so that every step
/// makes progress.
pub fn secant_intersection(br: &Bracket) -> Result<f64> {
    if br.fa == br.fb {
        return Err(Error::InvariantViolation(format!(
            "secant through equal values: {br:?}"
        )));
    }
    let c = (br.a * br.fb - br.b * br.fa) / (br.fb - br.fa);
    let (lo, hi) = if br.a < br.b { (br.a, br.b) } else { (br.b, br.a) };
    if c > lo && c < hi {
        Ok(c)
    } else {
        Ok(lo + 0.5 * (hi - lo))
    }
}

pub fn mu_factor(method: RfMethod, fb: f64, fc: f64) -> f64 {
    match method {
        RfMethod::RegulaFalsi => 1.0,
        RfMethod::Illinois => 0.5,
        RfMethod::Pegasus => fb / (fb + fc),
        RfMethod::AndersonBjorck => {
            let ratio = fc / fb;
            if ratio >= 1.0 {
                0.5
            } else {
                1.0 - ratio
            }
        }
    }
}

/// One bracket update for a new point `(c, f(c))`, `f(c) ≠ 0`.
pub fn rf_step(br: &Bracket, c: f64, fc: f64, method: RfMethod) -> Result<Bracket> {
    if !fc.is_finite() {
        return Err(Error::Domain(format!("non-finite f(c) = {fc} at c = {c}")));
    }
    let next = if fc * br.fb < 0.0 {
        Bracket {
            a: br.b,
            b: c,
            fa: br.fb,
            fb: fc,
        }
    } else {
        let mu = mu_factor(method, br.fb, fc);
        Bracket {
            a: br.a,
            b: c,
            fa: mu * br.fa,
            fb: fc,
        }
    };
    if !next.holds_sign_invariant() {
        return Err(Error::InvariantViolation(format!(
            "sign invariant lost: {br:?} → {next:?}"
        )));
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Width tolerance on `|b − a|`.
    pub eps: f64,
    /// Success tolerance on `|f(c)|`.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            eps: 1e-10,
            ftol: 0.0,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootStop {
    /// `f(c)` was exactly zero.
    ExactZero,
    /// `|f(c)| ≤ ftol`.
    Residual,
    /// `|b − a| ≤ eps`; the endpoint with smaller `|f|` is returned.
    Width,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootReport {
    pub root: f64,
    pub froot: f64,
    /// Function evaluations made by the driver. Endpoint values supplied by
    /// the caller are not counted, so this equals `trajectory.len()`.
    pub evaluations: usize,
    pub trajectory: Vec<(f64, f64)>,
    pub converged: bool,
    pub stop: RootStop,
    /// Final bracket (with μ-scaled `fa`).
    pub bracket: Bracket,
}

/// Solves `f(x) = 0` on `[a, b]`, evaluating `f` at both endpoints first.
/// Those two evaluations are counted.
pub fn solve_root(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    method: RfMethod,
    opts: &RootOptions,
) -> Result<RootReport> {
    let fa = f(a);
    let fb = f(b);
    for (x, fx) in [(a, fa), (b, fb)] {
        if !fx.is_finite() {
            return Err(Error::NumericalFailure {
                message: format!("non-finite f({x}) = {fx}"),
                iterations: 0,
                iterate: vec![x],
            });
        }
    }
    let mut trajectory = vec![(a, fa), (b, fb)];
    for (x, fx) in [(a, fa), (b, fb)] {
        if fx == 0.0 {
            return Ok(RootReport {
                root: x,
                froot: 0.0,
                evaluations: 2,
                trajectory,
                converged: true,
                stop: RootStop::ExactZero,
                bracket: Bracket { a, b, fa, fb },
            });
        }
    }
    let br = Bracket::new(a, b, fa, fb)?;
    let mut report = solve_root_bracketed(|x| Ok(f(x)), br, method, opts)?;
    trajectory.append(&mut report.trajectory);
    report.trajectory = trajectory;
    report.evaluations += 2;
    Ok(report)
}

/// Driver on a bracket whose endpoint values are already known. Only secant
/// points are evaluated and counted. The callback may fail; its error is
/// propagated unchanged.
pub fn solve_root_bracketed(
    mut f: impl FnMut(f64) -> Result<f64>,
    bracket: Bracket,
    method: RfMethod,
    opts: &RootOptions,
) -> Result<RootReport> {
    if !(opts.eps > 0.0) || !(opts.ftol >= 0.0) {
        return Err(Error::Domain(format!("invalid root options: {opts:?}")));
    }
    let mut br = Bracket::new(bracket.a, bracket.b, bracket.fa, bracket.fb)?;
    // True values at the endpoints; `br.fa` drifts under μ-scaling.
    let mut fa_true = br.fa;
    let mut fb_true = br.fb;
    let mut trajectory = Vec::new();

    let endpoint = |br: &Bracket, fa: f64, fb: f64| if fb.abs() <= fa.abs() { (br.b, fb) } else { (br.a, fa) };

    for _ in 0..opts.max_iter {
        if br.width() <= opts.eps {
            let (root, froot) = endpoint(&br, fa_true, fb_true);
            return Ok(RootReport {
                root,
                froot,
                evaluations: trajectory.len(),
                trajectory,
                converged: true,
                stop: RootStop::Width,
                bracket: br,
            });
        }
        let c = secant_intersection(&br)?;
        let fc = f(c)?;
        trajectory.push((c, fc));
        if !fc.is_finite() {
            return Err(Error::NumericalFailure {
                message: format!("non-finite f({c}) = {fc}"),
                iterations: trajectory.len(),
                iterate: vec![c],
            });
        }
        if fc == 0.0 || fc.abs() <= opts.ftol {
            return Ok(RootReport {
                root: c,
                froot: fc,
                evaluations: trajectory.len(),
                trajectory,
                converged: true,
                stop: if fc == 0.0 {
                    RootStop::ExactZero
                } else {
                    RootStop::Residual
                },
                bracket: br,
            });
        }
        let flipped = fc * br.fb < 0.0;
        br = rf_step(&br, c, fc, method)?;
        if flipped {
            fa_true = fb_true;
        }
        fb_true = fc;
    }

    let converged = br.width() <= opts.eps;
    let (root, froot) = endpoint(&br, fa_true, fb_true);
    Ok(RootReport {
        root,
        froot,
        evaluations: trajectory.len(),
        trajectory,
        converged,
        stop: if converged {
            RootStop::Width
        } else {
            RootStop::IterationCap
        },
        bracket: br,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisection_oracle(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let fa = f(a);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) * fa > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn secant_cases() {
        let br = Bracket::new(0.0, 2.0, -1.0, 1.0).unwrap();
        assert_eq!(secant_intersection(&br).unwrap(), 1.0);
        let br = Bracket::new(1.0, 2.0, -1.0, 2.0).unwrap();
        assert!((secant_intersection(&br).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let br = Bracket::new(-3.0, 5.0, 7.5, -7.5).unwrap();
        assert_eq!(secant_intersection(&br).unwrap(), 1.0);
        let bad = Bracket {
            a: 0.0,
            b: 1.0,
            fa: 1.0,
            fb: 1.0,
        };
        assert!(matches!(secant_intersection(&bad), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn mu_table() {
        for (fb, fc) in [(1.0, 0.3), (-2.0, -5.0)] {
            assert_eq!(mu_factor(RfMethod::RegulaFalsi, fb, fc), 1.0);
            assert_eq!(mu_factor(RfMethod::Illinois, fb, fc), 0.5);
        }
        assert!((mu_factor(RfMethod::Pegasus, 2.0, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(mu_factor(RfMethod::AndersonBjorck, 1.0, 2.0), 0.5);
        assert_eq!(mu_factor(RfMethod::AndersonBjorck, 4.0, 1.0), 0.75);
    }

    #[test]
    fn step_branches() {
        // f = x² − 2 on [1, 2]: c = 4/3, f(c) = −2/9 flips sign relative to f(b)
        let br = Bracket::new(1.0, 2.0, -1.0, 2.0).unwrap();
        let c = 4.0 / 3.0;
        let fc = c * c - 2.0;
        let next = rf_step(&br, c, fc, RfMethod::RegulaFalsi).unwrap();
        assert_eq!((next.a, next.b, next.fa, next.fb), (2.0, c, 2.0, fc));

        let br = Bracket::new(0.0, 2.0, -1.0, 3.0).unwrap();
        let next = rf_step(&br, 1.5, 1.0, RfMethod::Illinois).unwrap();
        assert_eq!((next.a, next.b, next.fa, next.fb), (0.0, 1.5, -0.5, 1.0));
        assert!(next.width() <= br.width());
    }

    #[test]
    fn linear_in_one_step() {
        for m in RfMethod::ALL {
            let r = solve_root(|x| x - 3.0, 0.0, 10.0, m, &RootOptions::default()).unwrap();
            assert_eq!(r.root, 3.0);
            assert_eq!(r.evaluations, 3);
            assert_eq!(r.stop, RootStop::ExactZero);
        }
    }

    #[test]
    fn sqrt_two_all_methods() {
        let opts = RootOptions {
            eps: 1e-10,
            ftol: 1e-14,
            max_iter: 10_000,
        };
        for m in RfMethod::ALL {
            let r = solve_root(|x| x * x - 2.0, 1.0, 2.0, m, &opts).unwrap();
            assert!(r.converged, "{m}");
            assert!((r.root - 2f64.sqrt()).abs() <= 1e-8, "{m}: {}", r.root);
            assert_eq!(r.evaluations, r.trajectory.len());
        }
    }

    #[test]
    fn modified_methods_beat_plain_regula_falsi() {
        let f = |x: f64| x.powi(10) - 1.0;
        let opts = RootOptions {
            eps: 1e-10,
            ftol: 1e-12,
            max_iter: 100_000,
        };
        let oracle = bisection_oracle(f, 0.0, 1.3);
        assert!((oracle - 1.0).abs() < 1e-12);
        let plain = solve_root(f, 0.0, 1.3, RfMethod::RegulaFalsi, &opts).unwrap();
        assert!(plain.converged);
        assert!((plain.root - oracle).abs() < 1e-9);
        for m in [RfMethod::Illinois, RfMethod::Pegasus, RfMethod::AndersonBjorck] {
            let r = solve_root(f, 0.0, 1.3, m, &opts).unwrap();
            assert!(r.converged);
            assert!((r.root - oracle).abs() < 1e-9, "{m}");
            assert!(
                r.evaluations < plain.evaluations,
                "{m}: {} vs {}",
                r.evaluations,
                plain.evaluations
            );
        }
    }

    #[test]
    fn width_stop_picks_smaller_residual_endpoint() {
        let opts = RootOptions {
            eps: 1e-3,
            ftol: 0.0,
            max_iter: 1000,
        };
        let r = solve_root(|x| x.powi(3) - 0.5, 0.0, 1.0, RfMethod::Illinois, &opts).unwrap();
        assert_eq!(r.stop, RootStop::Width);
        assert!(r.bracket.width() <= 1e-3);
        let other = if r.root == r.bracket.a {
            r.bracket.b
        } else {
            r.bracket.a
        };
        assert!(r.froot.abs() <= (other.powi(3) - 0.5).abs());
    }

    #[test]
    fn errors() {
        let opts = RootOptions::default();
        assert!(matches!(
            solve_root(|x| x * x + 1.0, -1.0, 1.0, RfMethod::Illinois, &opts),
            Err(Error::Bracketing { .. })
        ));
        assert!(matches!(
            solve_root(
                |x| if x > 0.5 { f64::NAN } else { x - 1.0 },
                0.0,
                2.0,
                RfMethod::Illinois,
                &opts
            ),
            Err(Error::NumericalFailure { .. })
        ));
        assert!(solve_root(|x| x, -1.0, 2.0, RfMethod::Illinois, &RootOptions { eps: 0.0, ..opts }).is_err());
    }

    #[test]
    fn iteration_cap_reported() {
        let opts = RootOptions {
            eps: 1e-15,
            ftol: 0.0,
            max_iter: 3,
        };
        let r = solve_root(|x| x.powi(10) - 1.0, 0.0, 1.3, RfMethod::RegulaFalsi, &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.stop, RootStop::IterationCap);
        assert_eq!(r.evaluations, 5);
    }

    #[test]
    fn method_tokens_round_trip() {
        for m in RfMethod::ALL {
            assert_eq!(m.token().parse::<RfMethod>().unwrap(), m);
        }
        assert!("newton".parse::<RfMethod>().is_err());
    }
}
