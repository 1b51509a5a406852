//! The dictionary `D ∈ R^{M×N}` and the method-of-frames decomposition
//! `x_MF = Dᵀ(DDᵀ)⁻¹y`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// `f(input, output)`; `output` arrives zeroed and has the codomain length.
pub type LinearMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum Storage {
    /// Row-major, `rows * cols` entries.
    Dense(Arc<[f64]>),
    Implicit {
        forward: LinearMap,
        adjoint: LinearMap,
    },
}

/// Immutable after construction; clones share storage.
#[derive(Clone)]
pub struct Dictionary {
    rows: usize,
    cols: usize,
    storage: Storage,
}

impl fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.storage {
            Storage::Dense(_) => "dense",
            Storage::Implicit { .. } => "implicit",
        };
        f.debug_struct("Dictionary")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("storage", &kind)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MofFallback {
    /// Fail with [`Error::RankDeficient`] when `DDᵀ` is numerically singular.
    #[default]
    Strict,
    /// Retry with `DDᵀ + εI`, `ε = 1e-10·trace(DDᵀ)/M`, and flag the result.
    Regularize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MofSolution {
    pub x: Vec<f64>,
    /// Set when the diagonally shifted Gram matrix had to be used.
    pub regularized: bool,
    pub shift: f64,
}

impl Dictionary {
    pub fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(format!("dictionary must be nonempty, got {rows}×{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "dense dictionary data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            storage: Storage::Dense(data.into()),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "dictionary row",
                    expected: n,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::dense(m, n, data)
    }

    /// An operator given only by its action. `forward` maps length `cols` to
    /// length `rows`, `adjoint` the reverse.
    pub fn implicit(
        rows: usize,
        cols: usize,
        forward: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        adjoint: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(format!("dictionary must be nonempty, got {rows}×{cols}")));
        }
        Ok(Self {
            rows,
            cols,
            storage: Storage::Implicit {
                forward: Arc::new(forward),
                adjoint: Arc::new(adjoint),
            },
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major entries, if the dictionary is stored densely.
    pub fn dense_data(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(d) => Some(d),
            Storage::Implicit { .. } => None,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.rows];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("apply input", self.cols, x.len())?;
        check_len("apply output", self.rows, out.len())?;
        match &self.storage {
            Storage::Dense(d) => {
                for (o, row) in out.iter_mut().zip(d.chunks_exact(self.cols)) {
                    *o = crate::dot(row, x);
                }
            }
            Storage::Implicit { forward, .. } => {
                out.fill(0.0);
                forward(x, out);
            }
        }
        Ok(())
    }

    pub fn apply_adjoint(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.cols];
        self.apply_adjoint_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_adjoint_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("adjoint input", self.rows, u.len())?;
        check_len("adjoint output", self.cols, out.len())?;
        out.fill(0.0);
        match &self.storage {
            Storage::Dense(d) => {
                for (&ui, row) in u.iter().zip(d.chunks_exact(self.cols)) {
                    if ui != 0.0 {
                        for (o, &dij) in out.iter_mut().zip(row) {
                            *o += ui * dij;
                        }
                    }
                }
            }
            Storage::Implicit { adjoint, .. } => adjoint(u, out),
        }
        Ok(())
    }

    /// `DDᵀ`, row-major `M×M`.
    pub fn gram(&self) -> Result<Vec<f64>> {
        let m = self.rows;
        let mut g = vec![0.0; m * m];
        match &self.storage {
            Storage::Dense(d) => {
                let rows: Vec<&[f64]> = d.chunks_exact(self.cols).collect();
                for i in 0..m {
                    for j in 0..=i {
                        let v = crate::dot(rows[i], rows[j]);
                        g[i * m + j] = v;
                        g[j * m + i] = v;
                    }
                }
            }
            Storage::Implicit { .. } => {
                let mut e = vec![0.0; m];
                let mut col = vec![0.0; m];
                for j in 0..m {
                    e.fill(0.0);
                    e[j] = 1.0;
                    let dt = self.apply_adjoint(&e)?;
                    self.apply_into(&dt, &mut col)?;
                    for i in 0..m {
                        g[i * m + j] = col[i];
                    }
                }
                // symmetrize away callback rounding
                for i in 0..m {
                    for j in 0..i {
                        let v = 0.5 * (g[i * m + j] + g[j * m + i]);
                        g[i * m + j] = v;
                        g[j * m + i] = v;
                    }
                }
            }
        }
        Ok(g)
    }

    /// Minimum ℓ2-norm exact decomposition of `y`. Fails on rank deficiency.
    pub fn mof_decomposition(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.mof_decomposition_with(y, MofFallback::Strict).map(|s| s.x)
    }

    pub fn mof_decomposition_with(&self, y: &[f64], fallback: MofFallback) -> Result<MofSolution> {
        check_len("frames measurement", self.rows, y.len())?;
        let m = self.rows;
        let g = self.gram()?;
        let (chol, shift) = match Cholesky::factor(&g, m, 0.0) {
            Ok(c) => (c, 0.0),
            Err(e) => match fallback {
                MofFallback::Strict => return Err(e),
                MofFallback::Regularize => {
                    let trace: f64 = (0..m).map(|i| g[i * m + i]).sum();
                    let shift = 1e-10 * trace / m as f64;
                    (Cholesky::factor(&g, m, shift)?, shift)
                }
            },
        };
        let z = chol.solve(y);
        let mut x = self.apply_adjoint(&z)?;
        // one step of iterative refinement
        let dx = self.apply(&x)?;
        let r: Vec<f64> = y.iter().zip(&dx).map(|(a, b)| a - b).collect();
        let dz = chol.solve(&r);
        let corr = self.apply_adjoint(&dz)?;
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += ci;
        }
        Ok(MofSolution {
            x,
            regularized: shift > 0.0,
            shift,
        })
    }
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Dense lower Cholesky factor, with pivots checked against `1e-12·‖A‖∞`.
struct Cholesky {
    l: Vec<f64>,
    n: usize,
}

impl Cholesky {
    fn factor(a: &[f64], n: usize, shift: f64) -> Result<Self> {
        let norm = (0..n)
            .map(|i| a[i * n..(i + 1) * n].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            + shift;
        let threshold = 1e-12 * norm;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j] + shift;
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > threshold) {
                return Err(Error::RankDeficient {
                    index: j,
                    pivot: d,
                    threshold,
                });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Self { l, n })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * n + k] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * z[k];
            }
            z[i] = s / self.l[i * n + i];
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dense(m: usize, n: usize, seed: u64) -> (Dictionary, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (Dictionary::dense(m, n, data.clone()).unwrap(), data)
    }

    fn implicit_copy(data: Vec<f64>, m: usize, n: usize) -> Dictionary {
        let fwd = data.clone();
        let adj = data;
        Dictionary::implicit(
            m,
            n,
            move |x, out| {
                for i in 0..m {
                    for j in 0..n {
                        out[i] += fwd[i * n + j] * x[j];
                    }
                }
            },
            move |u, out| {
                for i in 0..m {
                    for j in 0..n {
                        out[j] += adj[i * n + j] * u[i];
                    }
                }
            },
        )
        .unwrap()
    }

    #[test]
    fn identity_padded() {
        let d = Dictionary::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(d.apply(&[2.0, 3.0, 7.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(d.apply_adjoint(&[2.0, 3.0]).unwrap(), vec![2.0, 3.0, 0.0]);
        assert_eq!(d.apply(&[0.0; 3]).unwrap(), vec![0.0; 2]);
        assert_eq!(d.apply_adjoint(&[0.0; 2]).unwrap(), vec![0.0; 3]);
        let x = d.mof_decomposition(&[2.0, 3.0]).unwrap();
        assert_eq!(x, vec![2.0, 3.0, 0.0]);
        assert_eq!(crate::norm1(&x), 5.0);
    }

    #[test]
    fn matches_triple_loop() {
        let (m, n) = (7, 19);
        let (d, data) = random_dense(m, n, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dx = d.apply(&x).unwrap();
        let dtu = d.apply_adjoint(&u).unwrap();
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..n {
                s += data[i * n + j] * x[j];
            }
            assert!((s - dx[i]).abs() <= 1e-12);
        }
        for j in 0..n {
            let mut s = 0.0;
            for i in 0..m {
                s += data[i * n + j] * u[i];
            }
            assert!((s - dtu[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn adjoint_consistency_dense_and_implicit() {
        let (m, n) = (12, 40);
        let (dense, data) = random_dense(m, n, 9);
        let implicit = implicit_copy(data, m, n);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for d in [&dense, &implicit] {
            for _ in 0..50 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let u: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let lhs = crate::dot(&d.apply(&x).unwrap(), &u);
                let rhs = crate::dot(&x, &d.apply_adjoint(&u).unwrap());
                assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let d = Dictionary::dense(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(d.apply(&[1.0; 2]), Err(Error::DimensionMismatch { .. })));
        assert!(d.apply_adjoint(&[1.0; 3]).is_err());
        assert!(Dictionary::dense(2, 3, vec![0.0; 5]).is_err());
        assert!(Dictionary::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn mof_random_full_rank() {
        let (m, n) = (20, 60);
        let (dense, data) = random_dense(m, n, 21);
        let implicit = implicit_copy(data, m, n);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut sols = vec![];
        for d in [&dense, &implicit] {
            let x = d.mof_decomposition(&y).unwrap();
            let r: Vec<f64> = y.iter().zip(d.apply(&x).unwrap()).map(|(a, b)| a - b).collect();
            assert!(crate::norm2(&r) <= 1e-8 * (1.0 + crate::norm2(&y)));
            sols.push(x);
        }
        // x_MF lies in the row space: minimum-norm among exact fits. Adding any
        // null-space direction must increase ‖x‖₂.
        let x = &sols[0];
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pz = dense.mof_decomposition(&dense.apply(&z).unwrap()).unwrap();
        let null: Vec<f64> = z.iter().zip(&pz).map(|(a, b)| a - b).collect();
        assert!(crate::dot(x, &null).abs() <= 1e-9 * crate::norm2(x) * crate::norm2(&null));
        for (a, b) in sols[0].iter().zip(&sols[1]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let d = Dictionary::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        let err = d.mof_decomposition(&[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { index: 1, .. }), "{err}");
        let sol = d.mof_decomposition_with(&[1.0, 2.0], MofFallback::Regularize).unwrap();
        assert!(sol.regularized);
        assert!(sol.shift > 0.0);
        // consistent system: the regularized solve still fits
        let r = d.apply(&sol.x).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-6 && (r[1] - 2.0).abs() < 1e-6);
    }
}
