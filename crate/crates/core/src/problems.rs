//! Synthetic sparse-recovery instances `y = Dx + w + ζ` and the plain-text
//! problem file format.
//!
//! # Random streams
//!
//! Instances are drawn from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64(seed)`. Each field has its own stream, selected with
//! `set_stream`, so changing one field's size does not perturb the others:
//!
//! | stream | field                                   |
//! |--------|-----------------------------------------|
//! | 0      | dictionary entries, row-major           |
//! | 1      | support of `x_true`                     |
//! | 2      | nonzero values of `x_true`, index order |
//! | 3      | dense noise `w`                         |
//! | 4      | outlier positions, then outlier values  |
//!
//! Normal draws use `rand_distr::StandardNormal`.
//!
//! # File format
//!
//! UTF-8 text, whitespace separated, decimal or scientific notation:
//!
//! ```text
//! M N
//! d11 … d1N        (M lines of N numbers)
//! …
//! M
//! y1 … yM
//! N                (optional section)
//! x1 … xN
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::operator::Dictionary;

const STREAM_MATRIX: u64 = 0;
const STREAM_SUPPORT: u64 = 1;
const STREAM_VALUES: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_OUTLIERS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictKind {
    /// i.i.d. standard normal entries, columns scaled to unit ℓ2 norm.
    Gaussian,
    /// Gaussian rows orthonormalized so that `DDᵀ = I`.
    Parseval,
}

/// How `noise_var` and `outlier_var` are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dispersion {
    #[default]
    Variance,
    StdDev,
}

impl Dispersion {
    fn scale(self, v: f64) -> f64 {
        match self {
            Dispersion::Variance => v.sqrt(),
            Dispersion::StdDev => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub dict_kind: DictKind,
    pub noise_var: f64,
    pub n_outliers: usize,
    pub outlier_var: f64,
    pub dispersion: Dispersion,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 256×1024 Gaussian ensemble, 32-sparse, noiseless.
    pub fn gauss_en(seed: u64) -> Self {
        Self {
            m: 256,
            n: 1024,
            k: 32,
            dict_kind: DictKind::Gaussian,
            noise_var: 0.0,
            n_outliers: 0,
            outlier_var: 0.0,
            dispersion: Dispersion::Variance,
            seed,
        }
    }

    /// 175×600 Parseval frame, 20-sparse, noise variance 0.005 plus five
    /// outliers of variance 4.
    pub fn outliers(seed: u64) -> Self {
        Self {
            m: 175,
            n: 600,
            k: 20,
            dict_kind: DictKind::Parseval,
            noise_var: 0.005,
            n_outliers: 5,
            outlier_var: 4.0,
            dispersion: Dispersion::Variance,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m >= self.n {
            return Err(Error::Domain(format!(
                "need 0 < m < n, got m = {}, n = {}",
                self.m, self.n
            )));
        }
        if self.k > self.n {
            return Err(Error::Domain(format!("sparsity {} exceeds n = {}", self.k, self.n)));
        }
        if self.n_outliers > self.m {
            return Err(Error::Domain(format!(
                "{} outliers exceed m = {}",
                self.n_outliers, self.m
            )));
        }
        if !(self.noise_var >= 0.0) || !(self.outlier_var >= 0.0) {
            return Err(Error::Domain("variances must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub d: Dictionary,
    pub y: Vec<f64>,
    pub x_true: Option<Vec<f64>>,
    /// Sorted outlier positions in `y`.
    pub outlier_mask: Option<Vec<usize>>,
    /// The outlier vector `ζ` (zero off the mask).
    pub outliers: Option<Vec<f64>>,
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gen_instance(spec: &SyntheticSpec) -> Result<ProblemInstance> {
    spec.validate()?;
    let (m, n) = (spec.m, spec.n);

    let mut rng = stream(spec.seed, STREAM_MATRIX);
    let mut data: Vec<f64> = (0..m * n).map(|_| normal(&mut rng)).collect();
    match spec.dict_kind {
        DictKind::Gaussian => {
            for j in 0..n {
                let norm = (0..m).map(|i| data[i * n + j].powi(2)).sum::<f64>().sqrt();
                for i in 0..m {
                    data[i * n + j] /= norm;
                }
            }
        }
        DictKind::Parseval => {
            // thin QR of Dᵀ (n×m); D = Qᵀ has orthonormal rows
            let dt = DMatrix::from_fn(n, m, |j, i| data[i * n + j]);
            let q = dt.qr().q();
            for i in 0..m {
                for j in 0..n {
                    data[i * n + j] = q[(j, i)];
                }
            }
        }
    }
    let d = Dictionary::dense(m, n, data)?;

    let mut support: Vec<usize> = index::sample(&mut stream(spec.seed, STREAM_SUPPORT), n, spec.k).into_vec();
    support.sort_unstable();
    let mut rng = stream(spec.seed, STREAM_VALUES);
    let mut x_true = vec![0.0; n];
    for &j in &support {
        x_true[j] = normal(&mut rng);
    }

    let mut y = d.apply(&x_true)?;
    if spec.noise_var > 0.0 {
        let s = spec.dispersion.scale(spec.noise_var);
        let mut rng = stream(spec.seed, STREAM_NOISE);
        for yi in &mut y {
            *yi += s * normal(&mut rng);
        }
    }

    let (outlier_mask, outliers) = if spec.n_outliers > 0 {
        let mut rng = stream(spec.seed, STREAM_OUTLIERS);
        let mut mask = index::sample(&mut rng, m, spec.n_outliers).into_vec();
        mask.sort_unstable();
        let s = spec.dispersion.scale(spec.outlier_var);
        let mut zeta = vec![0.0; m];
        for &i in &mask {
            zeta[i] = s * normal(&mut rng);
            y[i] += zeta[i];
        }
        (Some(mask), Some(zeta))
    } else {
        (None, None)
    };

    Ok(ProblemInstance {
        d,
        y,
        x_true: Some(x_true),
        outlier_mask,
        outliers,
    })
}

/// `‖x̂ − x‖₂ / ‖x‖₂`.
pub fn recovery_error(x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    if x_hat.len() != x_true.len() {
        return Err(Error::DimensionMismatch {
            context: "recovery error",
            expected: x_true.len(),
            actual: x_hat.len(),
        });
    }
    let denom = crate::norm2(x_true);
    if denom == 0.0 {
        return Err(Error::Domain("relative error against a zero reference".into()));
    }
    let diff: Vec<f64> = x_hat.iter().zip(x_true).map(|(a, b)| a - b).collect();
    Ok(crate::norm2(&diff) / denom)
}

fn push_row(out: &mut String, values: &[f64]) {
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            out.push(' ');
        }
        // 17 significant digits round-trip every f64
        write!(out, "{v:.16e}").unwrap();
    }
    out.push('\n');
}

pub fn format_problem(inst: &ProblemInstance) -> Result<String> {
    let d = &inst.d;
    let data = d
        .dense_data()
        .ok_or_else(|| Error::Domain("only dense dictionaries can be written".into()))?;
    let (m, n) = (d.rows(), d.cols());
    let mut out = format!("{m} {n}\n");
    for row in data.chunks_exact(n) {
        push_row(&mut out, row);
    }
    writeln!(out, "{m}").unwrap();
    push_row(&mut out, &inst.y);
    if let Some(x) = &inst.x_true {
        writeln!(out, "{n}").unwrap();
        push_row(&mut out, x);
    }
    Ok(out)
}

pub fn write_problem(path: impl AsRef<Path>, inst: &ProblemInstance) -> Result<()> {
    std::fs::write(path, format_problem(inst)?)?;
    Ok(())
}

pub fn read_problem(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    parse_problem(&std::fs::read_to_string(path)?)
}

pub fn parse_problem(text: &str) -> Result<ProblemInstance> {
    let eof = text.lines().count();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |line: usize, message: String| Error::Parse {
        line: line + 1,
        message,
    };

    let (hl, header) = lines.next().ok_or_else(|| parse_err(0, "empty problem file".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(hl, format!("header must be 'M N', got '{}'", header.trim())));
    }
    let m = parse_count(dims[0], hl)?;
    let n = parse_count(dims[1], hl)?;
    if m == 0 || n == 0 {
        return Err(parse_err(hl, "dimensions must be positive".into()));
    }

    let mut data = Vec::with_capacity(m * n);
    for i in 0..m {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| parse_err(eof, format!("expected {m} matrix rows, found {i}")))?;
        let row = parse_floats(line, ln)?;
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                context: "matrix row",
                expected: n,
                actual: row.len(),
            });
        }
        data.extend(row);
    }

    // Remaining sections are token based: count, then that many values.
    let mut tokens = lines.flat_map(|(ln, l)| l.split_whitespace().map(move |t| (ln, t)));
    let mut section = |expected: usize, name: &'static str, required: bool| -> Result<Option<Vec<f64>>> {
        let Some((ln, tok)) = tokens.next() else {
            return if required {
                Err(parse_err(eof, format!("missing {name} section")))
            } else {
                Ok(None)
            };
        };
        let count = parse_count(tok, ln)?;
        if count != expected {
            return Err(Error::DimensionMismatch {
                context: name,
                expected,
                actual: count,
            });
        }
        let mut v = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, tok) = tokens
                .next()
                .ok_or_else(|| parse_err(eof, format!("{name} section ended early")))?;
            v.push(parse_float(tok, ln)?);
        }
        Ok(Some(v))
    };
    let y = section(m, "measurement", true)?.expect("required section");
    let x_true = section(n, "x_true", false)?;
    if let Some((ln, tok)) = tokens.next() {
        return Err(parse_err(ln, format!("unexpected trailing token '{tok}'")));
    }

    Ok(ProblemInstance {
        d: Dictionary::dense(m, n, data)?,
        y,
        x_true,
        outlier_mask: None,
        outliers: None,
    })
}

fn parse_count(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| Error::Parse {
        line: line + 1,
        message: format!("expected a count, got '{tok}'"),
    })
}

fn parse_float(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line: line + 1,
        message: format!("non-numeric token '{tok}'"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line: line + 1,
            message: format!("non-finite value '{tok}'"),
        });
    }
    Ok(v)
}

fn parse_floats(line: &str, ln: usize) -> Result<Vec<f64>> {
    line.split_whitespace().map(|t| parse_float(t, ln)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            m: 12,
            n: 30,
            k: 4,
            dict_kind: DictKind::Gaussian,
            noise_var: 0.01,
            n_outliers: 2,
            outlier_var: 4.0,
            dispersion: Dispersion::Variance,
            seed,
        }
    }

    #[test]
    fn parseval_rows_orthonormal() {
        let inst = gen_instance(&SyntheticSpec {
            dict_kind: DictKind::Parseval,
            ..small(5)
        })
        .unwrap();
        let g = inst.d.gram().unwrap();
        let m = inst.d.rows();
        for i in 0..m {
            for j in 0..m {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[i * m + j] - e).abs() <= 1e-10);
            }
        }
        // identity Gram: x_MF = Dᵀy
        let x_mf = inst.d.mof_decomposition(&inst.y).unwrap();
        let dty = inst.d.apply_adjoint(&inst.y).unwrap();
        for (a, b) in x_mf.iter().zip(&dty) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fig3_regime_dimensions() {
        let inst = gen_instance(&SyntheticSpec::outliers(1)).unwrap();
        assert_eq!((inst.d.rows(), inst.d.cols()), (175, 600));
        assert_eq!(inst.outlier_mask.as_ref().unwrap().len(), 5);
        assert_eq!(inst.x_true.as_ref().unwrap().iter().filter(|v| **v != 0.0).count(), 20);
        let spec = SyntheticSpec::gauss_en(1);
        assert_eq!((spec.m, spec.n), (256, 1024));
    }

    #[test]
    fn gaussian_columns_unit_norm() {
        let inst = gen_instance(&small(2)).unwrap();
        let data = inst.d.dense_data().unwrap();
        for j in 0..30 {
            let s: f64 = (0..12).map(|i| data[i * 30 + j].powi(2)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_is_exact() {
        let inst = gen_instance(&SyntheticSpec {
            noise_var: 0.0,
            n_outliers: 0,
            ..small(3)
        })
        .unwrap();
        assert_eq!(inst.y, inst.d.apply(inst.x_true.as_ref().unwrap()).unwrap());
        assert!(inst.outliers.is_none());
    }

    #[test]
    fn outliers_recorded() {
        let inst = gen_instance(&SyntheticSpec {
            noise_var: 0.0,
            ..small(4)
        })
        .unwrap();
        let clean = inst.d.apply(inst.x_true.as_ref().unwrap()).unwrap();
        let zeta = inst.outliers.unwrap();
        let mask = inst.outlier_mask.unwrap();
        for i in 0..12 {
            assert_eq!(inst.y[i], clean[i] + zeta[i]);
            assert_eq!(zeta[i] != 0.0, mask.contains(&i));
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_instance(&SyntheticSpec { m: 30, ..small(0) }).is_err());
        assert!(gen_instance(&SyntheticSpec { k: 31, ..small(0) }).is_err());
        assert!(gen_instance(&SyntheticSpec {
            noise_var: -1.0,
            ..small(0)
        })
        .is_err());
        assert!(gen_instance(&SyntheticSpec {
            n_outliers: 13,
            ..small(0)
        })
        .is_err());
    }

    #[test]
    fn recovery_error_cases() {
        assert_eq!(recovery_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(recovery_error(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 1.0);
        // ‖(3,4) − (0,0)‖ … hand pair: x̂ = (1, 1), x = (1, 0) → 1/1
        assert_eq!(recovery_error(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!((recovery_error(&[3.0, 0.0], &[0.0, 4.0]).unwrap() - 1.25).abs() < 1e-15);
        assert!(recovery_error(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn parse_fixture() {
        let text = "2 3\n1 0 0\n0 1.0e0 0\n2\n2 3\n";
        let inst = parse_problem(text).unwrap();
        assert_eq!(inst.d.apply(&[2.0, 3.0, 7.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(inst.y, vec![2.0, 3.0]);
        assert!(inst.x_true.is_none());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_problem(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_problem("2\n"), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_problem("2 3\n1 0\n0 1 0\n2\n1 2\n"),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            parse_problem("2 3\n1 0 x\n0 1 0\n2\n1 2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_problem("2 3\n1 0 0\n0 1 0\n3\n1 2 3\n"),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(parse_problem("2 3\n1 0 0\n0 1 0\n2\n1\n").is_err());
        assert!(parse_problem("2 3\n1 0 0\n0 1 0\n2\n1 2\n3\n1 2 3\n9\n").is_err());
    }

    #[test]
    fn seed_determinism() {
        let a = gen_instance(&SyntheticSpec::outliers(7)).unwrap();
        let b = gen_instance(&SyntheticSpec::outliers(7)).unwrap();
        assert_eq!(a.d.dense_data(), b.d.dense_data());
        assert_eq!(a.y, b.y);
        let c = gen_instance(&SyntheticSpec::outliers(8)).unwrap();
        assert_ne!(a.y, c.y);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_is_lossless(seed in any::<u64>(), parseval in any::<bool>()) {
            let kind = if parseval { DictKind::Parseval } else { DictKind::Gaussian };
            let inst = gen_instance(&SyntheticSpec { dict_kind: kind, ..small(seed) }).unwrap();
            let back = parse_problem(&format_problem(&inst).unwrap()).unwrap();
            prop_assert_eq!(back.d.dense_data(), inst.d.dense_data());
            prop_assert_eq!(&back.y, &inst.y);
            prop_assert_eq!(&back.x_true, &inst.x_true);
        }

        #[test]
        fn exact_sparsity(seed in any::<u64>(), k in 0usize..30) {
            let inst = gen_instance(&SyntheticSpec { k, ..small(seed) }).unwrap();
            let x = inst.x_true.unwrap();
            prop_assert_eq!(x.iter().filter(|v| **v != 0.0).count(), k);
        }
    }
}
