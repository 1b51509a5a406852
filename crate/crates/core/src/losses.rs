//! Misfit penalties `ρ` and their gradients.
//!
//! * least squares: `ρ(r) = ‖r‖₂` (the norm, not its square)
//! * Huber: `Σ r_i²/(2δ)` for `|r_i| ≤ δ`, `|r_i| − δ/2` otherwise
//! * Student's t: `Σ ν log(1 + r_i²/ν)`, nonconvex but quasi-convex per coordinate

use crate::error::{Error, Result};

pub const DEFAULT_HUBER_DELTA: f64 = 5e-3;
pub const DEFAULT_STUDENT_NU: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    LeastSquares,
    Huber { delta: f64 },
    StudentT { nu: f64 },
}

/// A validated loss selection. Construct through [`LossModel::new`] or the
/// named constructors so that `delta > 0` and `nu > 0` always hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    kind: LossKind,
}

impl LossModel {
    pub fn new(kind: LossKind) -> Result<Self> {
        match kind {
            LossKind::LeastSquares => {}
            LossKind::Huber { delta } => {
                if !(delta > 0.0 && delta.is_finite()) {
                    return Err(Error::Domain(format!("Huber delta must be positive, got {delta}")));
                }
            }
            LossKind::StudentT { nu } => {
                if !(nu > 0.0 && nu.is_finite()) {
                    return Err(Error::Domain(format!("Student's t nu must be positive, got {nu}")));
                }
            }
        }
        Ok(Self { kind })
    }

    pub fn least_squares() -> Self {
        Self {
            kind: LossKind::LeastSquares,
        }
    }

    pub fn huber(delta: f64) -> Result<Self> {
        Self::new(LossKind::Huber { delta })
    }

    pub fn student_t(nu: f64) -> Result<Self> {
        Self::new(LossKind::StudentT { nu })
    }

    /// Parses the tokens `ls`, `huber` and `student`. Missing parameters fall
    /// back to `δ = 5e-3` and `ν = 1e-2`.
    pub fn from_token(token: &str, delta: Option<f64>, nu: Option<f64>) -> Result<Self> {
        match token {
            "ls" => Ok(Self::least_squares()),
            "huber" => Self::huber(delta.unwrap_or(DEFAULT_HUBER_DELTA)),
            "student" => Self::student_t(nu.unwrap_or(DEFAULT_STUDENT_NU)),
            other => Err(Error::Domain(format!(
                "unknown loss '{other}', expected one of ls, huber, student"
            ))),
        }
    }

    pub fn token(&self) -> &'static str {
        match self.kind {
            LossKind::LeastSquares => "ls",
            LossKind::Huber { .. } => "huber",
            LossKind::StudentT { .. } => "student",
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self.kind, LossKind::StudentT { .. })
    }

    pub fn value(&self, r: &[f64]) -> Result<f64> {
        if r.is_empty() {
            return Err(Error::Domain("loss of an empty residual".into()));
        }
        Ok(match self.kind {
            LossKind::LeastSquares => crate::norm2(r),
            LossKind::Huber { delta } => r
                .iter()
                .map(|&v| {
                    let a = v.abs();
                    if a <= delta {
                        v * v / (2.0 * delta)
                    } else {
                        a - delta / 2.0
                    }
                })
                .sum(),
            LossKind::StudentT { nu } => r.iter().map(|&v| nu * (v * v / nu).ln_1p()).sum(),
        })
    }

    pub fn gradient(&self, r: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; r.len()];
        self.gradient_into(r, &mut out)?;
        Ok(out)
    }

    /// Writes `∇ρ(r)` into `out`. The least-squares gradient at `r = 0` is the
    /// zero subgradient.
    pub fn gradient_into(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        if r.is_empty() {
            return Err(Error::Domain("gradient of an empty residual".into()));
        }
        if out.len() != r.len() {
            return Err(Error::DimensionMismatch {
                context: "loss gradient output",
                expected: r.len(),
                actual: out.len(),
            });
        }
        match self.kind {
            LossKind::LeastSquares => {
                let n = crate::norm2(r);
                if n == 0.0 {
                    out.fill(0.0);
                } else {
                    for (o, &v) in out.iter_mut().zip(r) {
                        *o = v / n;
                    }
                }
            }
            LossKind::Huber { delta } => {
                for (o, &v) in out.iter_mut().zip(r) {
                    // quadratic branch owns the knee
                    *o = if v.abs() <= delta { v / delta } else { v.signum() };
                }
            }
            LossKind::StudentT { nu } => {
                for (o, &v) in out.iter_mut().zip(r) {
                    *o = 2.0 * v / (1.0 + v * v / nu);
                }
            }
        }
        Ok(())
    }
}

impl Default for LossModel {
    fn default() -> Self {
        Self::least_squares()
    }
}

impl std::fmt::Display for LossModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

pub fn loss_value(model: &LossModel, r: &[f64]) -> Result<f64> {
    model.value(r)
}

pub fn loss_gradient(model: &LossModel, r: &[f64]) -> Result<Vec<f64>> {
    model.gradient(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn least_squares_pythagorean() {
        let m = LossModel::least_squares();
        assert_eq!(m.value(&[3.0, 4.0]).unwrap(), 5.0);
        let g = m.gradient(&[3.0, 4.0]).unwrap();
        assert_relative_eq!(g[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn zero_residual() {
        for m in [
            LossModel::least_squares(),
            LossModel::huber(DEFAULT_HUBER_DELTA).unwrap(),
            LossModel::student_t(DEFAULT_STUDENT_NU).unwrap(),
        ] {
            assert_eq!(m.value(&[0.0; 4]).unwrap(), 0.0);
            assert_eq!(m.gradient(&[0.0; 4]).unwrap(), vec![0.0; 4]);
        }
    }

    #[test]
    fn huber_knee_and_tail() {
        let m = LossModel::huber(5e-3).unwrap();
        // both branches give δ/2 at the knee
        let knee = 5e-3;
        assert_relative_eq!(m.value(&[knee]).unwrap(), 2.5e-3, max_relative = 1e-14);
        assert_relative_eq!(knee * knee / (2.0 * knee), knee - knee / 2.0, max_relative = 1e-14);
        assert_relative_eq!(m.value(&[1.0]).unwrap(), 0.9975, max_relative = 1e-15);
        assert_eq!(m.gradient(&[1.0]).unwrap(), vec![1.0]);
        assert_eq!(m.gradient(&[-knee]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn convexity_flags() {
        assert!(LossModel::least_squares().is_convex());
        assert!(LossModel::huber(1.0).unwrap().is_convex());
        assert!(!LossModel::student_t(1.0).unwrap().is_convex());
    }

    #[test]
    fn invalid_parameters_and_empty_input() {
        assert!(LossModel::huber(0.0).is_err());
        assert!(LossModel::huber(-1.0).is_err());
        assert!(LossModel::student_t(f64::NAN).is_err());
        assert!(matches!(LossModel::least_squares().value(&[]), Err(Error::Domain(_))));
        assert!(LossModel::least_squares().gradient(&[]).is_err());
        assert!(LossModel::from_token("cauchy", None, None).is_err());
    }

    #[test]
    fn tokens_use_default_parameters() {
        assert_eq!(
            LossModel::from_token("huber", None, None).unwrap().kind(),
            LossKind::Huber { delta: 5e-3 }
        );
        assert_eq!(
            LossModel::from_token("student", None, Some(0.5)).unwrap().kind(),
            LossKind::StudentT { nu: 0.5 }
        );
    }

    #[test]
    fn student_t_is_monotone_in_magnitude() {
        let m = LossModel::student_t(DEFAULT_STUDENT_NU).unwrap();
        let mut prev = 0.0;
        for i in 0..2000 {
            let t = i as f64 * 5e-3;
            let v = m.value(&[t]).unwrap();
            assert!(v >= prev);
            assert_eq!(v, m.value(&[-t]).unwrap());
            prev = v;
        }
    }

    fn model_strategy() -> impl Strategy<Value = LossModel> {
        prop_oneof![
            Just(LossModel::least_squares()),
            (1e-3f64..1.0).prop_map(|d| LossModel::huber(d).unwrap()),
            (1e-3f64..1.0).prop_map(|n| LossModel::student_t(n).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn nonnegative(m in model_strategy(), r in prop::collection::vec(-10.0f64..10.0, 1..50)) {
            prop_assert!(m.value(&r).unwrap() >= 0.0);
        }

        #[test]
        fn midpoint_convexity(
            m in prop_oneof![
                Just(LossModel::least_squares()),
                (1e-3f64..1.0).prop_map(|d| LossModel::huber(d).unwrap()),
            ],
            pair in (1usize..30).prop_flat_map(|n| (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )),
        ) {
            let (r1, r2) = pair;
            let mid: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| 0.5 * (a + b)).collect();
            let lhs = m.value(&mid).unwrap();
            let rhs = 0.5 * (m.value(&r1).unwrap() + m.value(&r2).unwrap());
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
