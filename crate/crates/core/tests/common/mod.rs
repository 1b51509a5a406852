//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls the solvers under test.
#![allow(dead_code)]

use l1pareto::{Dictionary, LossModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Row-major Gaussian matrix with unit-norm columns.
pub fn random_dictionary(rng: &mut impl Rng, m: usize, n: usize) -> Dictionary {
    let mut data = gaussian(rng, m * n);
    for j in 0..n {
        let s = (0..m).map(|i| data[i * n + j].powi(2)).sum::<f64>().sqrt();
        for i in 0..m {
            data[i * n + j] /= s;
        }
    }
    Dictionary::dense(m, n, data).unwrap()
}

fn to_matrix(d: &Dictionary) -> DMatrix<f64> {
    DMatrix::from_row_slice(d.rows(), d.cols(), d.dense_data().unwrap())
}

/// ν(τ) = min ‖y − Dx‖₂ over ‖x‖₁ ≤ τ by enumeration.
///
/// On the optimal face every support S (|S| ≤ M) and sign pattern s gives
/// the equality-constrained least-squares system
/// `[D_SᵀD_S s; sᵀ 0][x_S; λ] = [D_Sᵀy; τ]`. Candidates whose signs agree
/// with s are feasible; the optimum is the smallest residual among them,
/// the exact fits `x_S = D_S⁻¹y` with ‖x_S‖₁ ≤ τ, and x = 0.
pub fn brute_force_nu_ls(d: &Dictionary, y: &[f64], tau: f64) -> f64 {
    let dm = to_matrix(d);
    let yv = DVector::from_column_slice(y);
    let (m, n) = (d.rows(), d.cols());
    assert!(n <= 12, "enumeration is exponential in N");
    let mut best = yv.norm();
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let k = support.len();
        if k > m {
            continue;
        }
        let ds = dm.select_columns(&support);
        let gram = ds.transpose() * &ds;
        let rhs = ds.transpose() * &yv;

        if k == m {
            if let Some(x) = ds.clone().lu().solve(&yv) {
                if x.iter().map(|v| v.abs()).sum::<f64>() <= tau {
                    best = best.min((&yv - &ds * &x).norm());
                }
            }
        }
        for signs in 0u32..(1 << k) {
            let s: Vec<f64> = (0..k).map(|i| if signs & (1 << i) != 0 { -1.0 } else { 1.0 }).collect();
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            kkt.view_mut((0, 0), (k, k)).copy_from(&gram);
            for i in 0..k {
                kkt[(i, k)] = s[i];
                kkt[(k, i)] = s[i];
            }
            let mut b = DVector::zeros(k + 1);
            b.rows_mut(0, k).copy_from(&rhs);
            b[k] = tau;
            let Some(sol) = kkt.lu().solve(&b) else { continue };
            let x = sol.rows(0, k);
            if x.iter().zip(&s).all(|(xi, si)| xi * si >= -1e-12) {
                best = best.min((&yv - &ds * x).norm());
            }
        }
    }
    best
}

/// Central differences of ρ with per-component step 1e-6(1 + |r_i|).
pub fn fd_gradient(model: &LossModel, r: &[f64]) -> Vec<f64> {
    let mut p = r.to_vec();
    (0..r.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + r[i].abs());
            p[i] = r[i] + h;
            let up = model.value(&p).unwrap();
            p[i] = r[i] - h;
            let down = model.value(&p).unwrap();
            p[i] = r[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Residual vector with entries spread over four decades so both Huber
/// branches and the Student's t bend are exercised.
pub fn spread_residual(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            g * 10f64.powf(rng.random_range(-3.0..1.0))
        })
        .collect()
}

/// Normwise relative FD error with floor 1, or None when the point sits on
/// a kink that central differences cannot resolve.
pub fn fd_error(model: &LossModel, r: &[f64]) -> Option<f64> {
    use l1pareto::LossKind;
    match model.kind() {
        LossKind::LeastSquares if l1pareto::norm2(r) < 1e-8 => return None,
        LossKind::Huber { delta }
            if r.iter()
                .any(|v| (v.abs() - delta).abs() <= 1e-8f64.max(1e-6 * (1.0 + v.abs()))) =>
        {
            return None
        }
        _ => {}
    }
    let g = model.gradient(r).unwrap();
    let fd = fd_gradient(model, r);
    let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
    Some(l1pareto::norm2(&diff) / l1pareto::norm2(&g).max(1.0))
}
