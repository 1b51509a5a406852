//! Euclidean projection onto the ℓ1 ball `{x : ‖x‖₁ ≤ τ}`.
//!
//! Infeasible inputs are soft-thresholded, `x_i = sgn(a_i)·max(|a_i| − κ, 0)`,
//! with the threshold `κ` found by sorting magnitudes `c₁ ≥ … ≥ c_N` and taking
//! the largest `K` with `(Σ_{j≤K} c_j − τ)/K ≤ c_K`.

use crate::error::{Error, Result};
use crate::norm1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub x: Vec<f64>,
    /// Soft threshold. Zero when the input was already feasible.
    pub kappa: f64,
    /// Number of entries above the threshold. For feasible inputs this is
    /// the number of nonzeros of the input.
    pub support_size: usize,
}

pub fn project(a: &[f64], tau: f64) -> Result<ProjectionResult> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("ℓ1 ball radius must be nonnegative, got {tau}")));
    }
    if a.is_empty() {
        return Err(Error::Domain("projection of an empty vector".into()));
    }
    if norm1(a) <= tau {
        return Ok(ProjectionResult {
            x: a.to_vec(),
            kappa: 0.0,
            support_size: a.iter().filter(|v| **v != 0.0).count(),
        });
    }
    if tau == 0.0 {
        return Ok(ProjectionResult {
            x: vec![0.0; a.len()],
            kappa: crate::norm_inf(a),
            support_size: 0,
        });
    }

    let mut order: Vec<usize> = (0..a.len()).collect();
    // descending magnitude, ties by index
    order.sort_by(|&i, &j| a[j].abs().total_cmp(&a[i].abs()).then(i.cmp(&j)));

    let mut cumsum = 0.0;
    let mut support = 0;
    let mut support_sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        let c = a[i].abs();
        cumsum += c;
        if (cumsum - tau) / (k + 1) as f64 <= c {
            support = k + 1;
            support_sum = cumsum;
        }
    }
    let mut kappa = (support_sum - tau) / support as f64;
    let mut x = soft_threshold(a, kappa);
    // Rounding can leave ‖x‖₁ a few ulps above τ; nudging κ up keeps the
    // output exactly feasible, which makes the projection idempotent.
    loop {
        let excess = norm1(&x) - tau;
        if excess <= 0.0 {
            break;
        }
        kappa = (kappa + excess / support as f64).max(kappa.next_up());
        x = soft_threshold(a, kappa);
    }
    Ok(ProjectionResult {
        x,
        kappa,
        support_size: support,
    })
}

fn soft_threshold(a: &[f64], kappa: f64) -> Vec<f64> {
    a.iter()
        .map(|&v| {
            let m = v.abs() - kappa;
            if m > 0.0 {
                v.signum() * m
            } else {
                0.0
            }
        })
        .collect()
}
