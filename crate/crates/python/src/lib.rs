//! Python bindings. Vectors cross the boundary as lists of floats.

use std::sync::{Arc, Mutex};

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use ::l1pareto as core;
use ::l1pareto::{Error, LevelSetOptions, RfMethod, RootOptions, TauConfig};

create_exception!(
    l1pareto,
    SolverError,
    PyException,
    "The solver failed numerically or lost its bracket."
);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        Error::Domain(_) | Error::DimensionMismatch { .. } | Error::Parse { .. } | Error::UnsupportedModel(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => SolverError::new_err(e.to_string()),
    }
}

/// Holds the first exception raised inside a Python callback so it can be
/// re-raised once control returns from the solver.
#[derive(Clone, Default)]
struct CallbackError(Arc<Mutex<Option<PyErr>>>);

impl CallbackError {
    fn set(&self, err: PyErr) {
        let mut slot = self.0.lock().unwrap();
        if slot.is_none() {
            *slot = Some(err);
        }
    }

    fn take(&self) -> Option<PyErr> {
        self.0.lock().unwrap().take()
    }

    /// Prefers a pending callback exception over the solver's own error.
    fn finish<T>(&self, r: core::Result<T>) -> PyResult<T> {
        if let Some(err) = self.take() {
            return Err(err);
        }
        r.map_err(to_py)
    }
}

#[pyclass(name = "Loss", module = "l1pareto", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLoss {
    inner: core::LossModel,
}

#[pymethods]
impl PyLoss {
    /// `kind` is "ls", "huber" or "student".
    #[new]
    #[pyo3(signature = (kind="ls", delta=None, nu=None))]
    fn new(kind: &str, delta: Option<f64>, nu: Option<f64>) -> PyResult<Self> {
        core::LossModel::from_token(kind, delta, nu)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.token()
    }

    #[getter]
    fn parameter(&self) -> Option<f64> {
        match self.inner.kind() {
            core::LossKind::LeastSquares => None,
            core::LossKind::Huber { delta } => Some(delta),
            core::LossKind::StudentT { nu } => Some(nu),
        }
    }

    #[getter]
    fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }

    fn value(&self, r: Vec<f64>) -> PyResult<f64> {
        self.inner.value(&r).map_err(to_py)
    }

    fn gradient(&self, r: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.gradient(&r).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        match self.parameter() {
            None => format!("Loss('{}')", self.kind()),
            Some(p) => format!("Loss('{}', {})", self.kind(), p),
        }
    }
}

#[pyclass(name = "Dictionary", module = "l1pareto", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDictionary {
    inner: core::Dictionary,
    callbacks: CallbackError,
}

impl PyDictionary {
    fn wrap(inner: core::Dictionary) -> Self {
        Self {
            inner,
            callbacks: CallbackError::default(),
        }
    }
}

fn python_map(
    f: Py<PyAny>,
    out_len: usize,
    errors: CallbackError,
) -> impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static {
    move |x: &[f64], out: &mut [f64]| {
        let result = Python::attach(|py| -> PyResult<Vec<f64>> {
            let v: Vec<f64> = f.call1(py, (x.to_vec(),))?.extract(py)?;
            if v.len() != out_len {
                return Err(PyValueError::new_err(format!(
                    "operator callback returned {} values, expected {out_len}",
                    v.len()
                )));
            }
            Ok(v)
        });
        match result {
            Ok(v) => out.copy_from_slice(&v),
            Err(e) => {
                errors.set(e);
                out.fill(f64::NAN);
            }
        }
    }
}

#[pymethods]
impl PyDictionary {
    /// Dense dictionary from a list of rows.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        core::Dictionary::from_rows(&rows).map(Self::wrap).map_err(to_py)
    }

    /// Matrix-free dictionary. `forward(x)` must return D·x (length `rows`)
    /// and `adjoint(u)` must return Dᵀ·u (length `cols`).
    #[staticmethod]
    fn implicit(rows: usize, cols: usize, forward: Py<PyAny>, adjoint: Py<PyAny>) -> PyResult<Self> {
        let callbacks = CallbackError::default();
        let inner = core::Dictionary::implicit(
            rows,
            cols,
            python_map(forward, rows, callbacks.clone()),
            python_map(adjoint, cols, callbacks.clone()),
        )
        .map_err(to_py)?;
        Ok(Self { inner, callbacks })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    #[getter]
    fn is_dense(&self) -> bool {
        self.inner.dense_data().is_some()
    }

    /// Rows of a dense dictionary, `None` for a matrix-free one.
    fn to_rows(&self) -> Option<Vec<Vec<f64>>> {
        self.inner
            .dense_data()
            .map(|d| d.chunks(self.inner.cols()).map(<[f64]>::to_vec).collect())
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.callbacks.finish(self.inner.apply(&x))
    }

    fn apply_adjoint(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.callbacks.finish(self.inner.apply_adjoint(&u))
    }

    /// Minimum-norm solution `Dᵀ(DDᵀ)⁻¹y`.
    fn mof_decomposition(&self, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.callbacks.finish(self.inner.mof_decomposition(&y))
    }

    fn __repr__(&self) -> String {
        let kind = if self.is_dense() { "dense" } else { "implicit" };
        format!("Dictionary({}x{}, {kind})", self.inner.rows(), self.inner.cols())
    }
}

#[pyclass(name = "ProblemInstance", module = "l1pareto", frozen, get_all)]
struct PyProblemInstance {
    d: Py<PyDictionary>,
    y: Vec<f64>,
    x_true: Option<Vec<f64>>,
    outlier_mask: Option<Vec<usize>>,
    outliers: Option<Vec<f64>>,
}

impl PyProblemInstance {
    fn wrap(py: Python<'_>, inst: core::ProblemInstance) -> PyResult<Self> {
        Ok(Self {
            d: Py::new(py, PyDictionary::wrap(inst.d))?,
            y: inst.y,
            x_true: inst.x_true,
            outlier_mask: inst.outlier_mask,
            outliers: inst.outliers,
        })
    }
}

#[pymethods]
impl PyProblemInstance {
    fn __repr__(&self) -> String {
        format!(
            "ProblemInstance(M={}, has_x_true={})",
            self.y.len(),
            self.x_true.is_some()
        )
    }
}

#[pyclass(name = "TauSolution", module = "l1pareto", frozen, get_all)]
struct PyTauSolution {
    x: Vec<f64>,
    value: f64,
    residual: Vec<f64>,
    iterations: usize,
    forward_products: usize,
    adjoint_products: usize,
    converged: bool,
    reason: &'static str,
}

impl From<core::TauSolution> for PyTauSolution {
    fn from(s: core::TauSolution) -> Self {
        Self {
            reason: match s.reason {
                core::TauStop::Optimal => "optimal",
                core::TauStop::IterationCap => "iteration_cap",
                core::TauStop::Stall => "stall",
            },
            x: s.x,
            value: s.value,
            residual: s.residual,
            iterations: s.iterations,
            forward_products: s.products.forward,
            adjoint_products: s.products.adjoint,
            converged: s.converged,
        }
    }
}

impl PyTauSolution {
    fn to_core(&self) -> core::TauSolution {
        core::TauSolution {
            x: self.x.clone(),
            value: self.value,
            residual: self.residual.clone(),
            iterations: self.iterations,
            products: core::Products {
                forward: self.forward_products,
                adjoint: self.adjoint_products,
            },
            converged: self.converged,
            reason: core::TauStop::Optimal,
        }
    }
}

#[pymethods]
impl PyTauSolution {
    fn __repr__(&self) -> String {
        format!(
            "TauSolution(value={:e}, iterations={}, reason='{}')",
            self.value, self.iterations, self.reason
        )
    }
}

#[pyclass(name = "SigmaReport", module = "l1pareto", frozen, get_all)]
struct PySigmaReport {
    x_sigma: Vec<f64>,
    rho_r: f64,
    x_norm1: f64,
    nnz: usize,
    tau_sigma: f64,
    tau_mf: f64,
    tau_solves: usize,
    tau_trajectory: Vec<(f64, f64)>,
    inexact_evaluations: usize,
    stop: &'static str,
    converged: bool,
}

impl From<core::SigmaReport> for PySigmaReport {
    fn from(r: core::SigmaReport) -> Self {
        Self {
            stop: match r.stop {
                core::SigmaStop::ZeroFeasible => "zero_feasible",
                core::SigmaStop::Residual => "residual",
                core::SigmaStop::Width => "width",
                core::SigmaStop::IterationCap => "iteration_cap",
            },
            x_sigma: r.x_sigma,
            rho_r: r.rho_r,
            x_norm1: r.x_norm1,
            nnz: r.nnz,
            tau_sigma: r.tau_sigma,
            tau_mf: r.tau_mf,
            tau_solves: r.tau_solves,
            tau_trajectory: r.tau_trajectory,
            inexact_evaluations: r.inexact_evaluations,
            converged: r.converged,
        }
    }
}

#[pymethods]
impl PySigmaReport {
    fn psi(&self, sigma: f64) -> f64 {
        self.rho_r - sigma
    }

    fn __repr__(&self) -> String {
        format!(
            "SigmaReport(rho_r={:e}, x_norm1={:e}, nnz={}, tau_solves={}, converged={})",
            self.rho_r, self.x_norm1, self.nnz, self.tau_solves, self.converged
        )
    }
}

#[pyclass(name = "RootReport", module = "l1pareto", frozen, get_all)]
struct PyRootReport {
    root: f64,
    froot: f64,
    evaluations: usize,
    trajectory: Vec<(f64, f64)>,
    converged: bool,
    stop: &'static str,
}

#[pymethods]
impl PyRootReport {
    fn __repr__(&self) -> String {
        format!(
            "RootReport(root={:e}, evaluations={}, stop='{}')",
            self.root, self.evaluations, self.stop
        )
    }
}

fn parse_method(method: &str) -> PyResult<RfMethod> {
    method.parse().map_err(to_py)
}

fn tau_config(max_iters: usize, opt_tol: f64, ls_memory: usize) -> TauConfig {
    TauConfig {
        max_iters,
        opt_tol,
        ls_memory,
        ..TauConfig::default()
    }
}

/// Euclidean projection onto `{x : ‖x‖₁ ≤ tau}`; returns `(x, kappa, support_size)`.
#[pyfunction]
fn project_l1(a: Vec<f64>, tau: f64) -> PyResult<(Vec<f64>, f64, usize)> {
    let p = core::project(&a, tau).map_err(to_py)?;
    Ok((p.x, p.kappa, p.support_size))
}

#[pyfunction]
fn loss_value(loss: &PyLoss, r: Vec<f64>) -> PyResult<f64> {
    loss.value(r)
}

#[pyfunction]
fn loss_gradient(loss: &PyLoss, r: Vec<f64>) -> PyResult<Vec<f64>> {
    loss.gradient(r)
}

/// Minimise ρ(y − Dx) over `‖x‖₁ ≤ tau`.
#[pyfunction]
#[pyo3(signature = (d, y, loss, tau, x0=None, max_iters=10_000, opt_tol=1e-6, ls_memory=10))]
#[allow(clippy::too_many_arguments)]
fn solve_tau(
    d: &PyDictionary,
    y: Vec<f64>,
    loss: &PyLoss,
    tau: f64,
    x0: Option<Vec<f64>>,
    max_iters: usize,
    opt_tol: f64,
    ls_memory: usize,
) -> PyResult<PyTauSolution> {
    let cfg = tau_config(max_iters, opt_tol, ls_memory);
    let r = core::solve_tau(&d.inner, &y, &loss.inner, tau, x0.as_deref(), &cfg);
    d.callbacks.finish(r).map(Into::into)
}

/// `‖Dᵀ∇ρ(r)‖∞` at a subproblem solution. The frontier slope is its negative.
#[pyfunction]
fn dual_certificate(d: &PyDictionary, loss: &PyLoss, solution: &PyTauSolution) -> PyResult<f64> {
    let r = core::dual_certificate(&d.inner, &loss.inner, &solution.to_core());
    d.callbacks.finish(r)
}

/// Minimise ‖x‖₁ subject to ρ(y − Dx) ≤ sigma. `method` is one of rf,
/// illinois, pegasus, ab or newton.
#[pyfunction]
#[pyo3(signature = (
    d, y, loss, sigma, method="illinois", eps=None, ftol_rel=1e-3, max_root_iter=1000,
    warm_start=true, max_iters=10_000, opt_tol=1e-6, ls_memory=10
))]
#[allow(clippy::too_many_arguments)]
fn solve_sigma(
    d: &PyDictionary,
    y: Vec<f64>,
    loss: &PyLoss,
    sigma: f64,
    method: &str,
    eps: Option<f64>,
    ftol_rel: f64,
    max_root_iter: usize,
    warm_start: bool,
    max_iters: usize,
    opt_tol: f64,
    ls_memory: usize,
) -> PyResult<PySigmaReport> {
    let opts = LevelSetOptions {
        eps,
        ftol_rel,
        max_root_iter,
        warm_start,
        tau: tau_config(max_iters, opt_tol, ls_memory),
        ..LevelSetOptions::default()
    };
    let prob = core::SigmaProblem::new(&d.inner, &y, loss.inner, sigma).map_err(to_py)?;
    let r = if method == "newton" {
        core::newton_solve_sigma(&prob, &opts)
    } else {
        core::solve_sigma(&prob, parse_method(method)?, &opts)
    };
    d.callbacks.finish(r).map(Into::into)
}

/// Newton iteration on the frontier; convex losses only.
#[pyfunction]
#[pyo3(signature = (d, y, loss, sigma, ftol_rel=1e-3, max_root_iter=1000))]
fn newton_solve_sigma(
    d: &PyDictionary,
    y: Vec<f64>,
    loss: &PyLoss,
    sigma: f64,
    ftol_rel: f64,
    max_root_iter: usize,
) -> PyResult<PySigmaReport> {
    let opts = LevelSetOptions {
        ftol_rel,
        max_root_iter,
        ..LevelSetOptions::default()
    };
    let prob = core::SigmaProblem::new(&d.inner, &y, loss.inner, sigma).map_err(to_py)?;
    d.callbacks
        .finish(core::newton_solve_sigma(&prob, &opts))
        .map(Into::into)
}

/// `[(tau, nu(tau))]` for the given radii, warm-started in increasing order.
#[pyfunction]
#[pyo3(signature = (d, y, loss, taus, max_iters=10_000, opt_tol=1e-6, ls_memory=10))]
fn sample_pareto_curve(
    d: &PyDictionary,
    y: Vec<f64>,
    loss: &PyLoss,
    taus: Vec<f64>,
    max_iters: usize,
    opt_tol: f64,
    ls_memory: usize,
) -> PyResult<Vec<(f64, f64)>> {
    let prob = core::SigmaProblem::new(&d.inner, &y, loss.inner, 0.0).map_err(to_py)?;
    let r = core::sample_pareto_curve(&prob, &taus, &tau_config(max_iters, opt_tol, ls_memory));
    d.callbacks.finish(r)
}

/// Bracketed root of a Python callable on `[a, b]`.
#[pyfunction]
#[pyo3(signature = (f, a, b, method="illinois", eps=1e-10, ftol=0.0, max_iter=1000))]
#[allow(clippy::too_many_arguments)]
fn solve_root(
    f: Bound<'_, PyAny>,
    a: f64,
    b: f64,
    method: &str,
    eps: f64,
    ftol: f64,
    max_iter: usize,
) -> PyResult<PyRootReport> {
    let method = parse_method(method)?;
    let opts = RootOptions { eps, ftol, max_iter };
    let mut failure: Option<PyErr> = None;
    let r = core::solve_root(
        |x| match f.call1((x,)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
        method,
        &opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let r = r.map_err(to_py)?;
    Ok(PyRootReport {
        stop: match r.stop {
            core::RootStop::ExactZero => "exact_zero",
            core::RootStop::Residual => "residual",
            core::RootStop::Width => "width",
            core::RootStop::IterationCap => "iteration_cap",
        },
        root: r.root,
        froot: r.froot,
        evaluations: r.evaluations,
        trajectory: r.trajectory,
        converged: r.converged,
    })
}

/// Synthetic sparse-recovery instance. `preset` ("gauss-en" or "outliers")
/// supplies defaults that the keyword arguments override.
#[pyfunction]
#[pyo3(signature = (
    preset=None, *, seed=0, m=None, n=None, k=None, dict=None, noise_var=None,
    n_outliers=None, outlier_var=None, dispersion=None
))]
#[allow(clippy::too_many_arguments)]
fn gen_instance(
    py: Python<'_>,
    preset: Option<&str>,
    seed: u64,
    m: Option<usize>,
    n: Option<usize>,
    k: Option<usize>,
    dict: Option<&str>,
    noise_var: Option<f64>,
    n_outliers: Option<usize>,
    outlier_var: Option<f64>,
    dispersion: Option<&str>,
) -> PyResult<PyProblemInstance> {
    let mut spec = match preset {
        None | Some("gauss-en") => core::SyntheticSpec::gauss_en(seed),
        Some("outliers") => core::SyntheticSpec::outliers(seed),
        Some(other) => return Err(PyValueError::new_err(format!("unknown preset '{other}'"))),
    };
    spec.m = m.unwrap_or(spec.m);
    spec.n = n.unwrap_or(spec.n);
    spec.k = k.unwrap_or(spec.k);
    spec.noise_var = noise_var.unwrap_or(spec.noise_var);
    spec.n_outliers = n_outliers.unwrap_or(spec.n_outliers);
    spec.outlier_var = outlier_var.unwrap_or(spec.outlier_var);
    if let Some(kind) = dict {
        spec.dict_kind = match kind {
            "gaussian" => core::DictKind::Gaussian,
            "parseval" => core::DictKind::Parseval,
            _ => return Err(PyValueError::new_err(format!("unknown dictionary kind '{kind}'"))),
        };
    }
    if let Some(disp) = dispersion {
        spec.dispersion = match disp {
            "variance" => core::Dispersion::Variance,
            "std" => core::Dispersion::StdDev,
            _ => return Err(PyValueError::new_err(format!("unknown dispersion '{disp}'"))),
        };
    }
    let inst = core::gen_instance(&spec).map_err(to_py)?;
    PyProblemInstance::wrap(py, inst)
}

#[pyfunction]
fn read_problem(py: Python<'_>, path: std::path::PathBuf) -> PyResult<PyProblemInstance> {
    let inst = core::read_problem(path).map_err(to_py)?;
    PyProblemInstance::wrap(py, inst)
}

#[pyfunction]
fn write_problem(path: std::path::PathBuf, instance: &PyProblemInstance) -> PyResult<()> {
    let inst = core::ProblemInstance {
        d: instance.d.get().inner.clone(),
        y: instance.y.clone(),
        x_true: instance.x_true.clone(),
        outlier_mask: instance.outlier_mask.clone(),
        outliers: instance.outliers.clone(),
    };
    core::write_problem(path, &inst).map_err(to_py)
}

/// Entries with `|x_i| > rel_threshold·‖x‖∞`.
#[pyfunction]
#[pyo3(signature = (x, rel_threshold=1e-6))]
fn count_nnz(x: Vec<f64>, rel_threshold: f64) -> usize {
    core::count_nnz(&x, rel_threshold)
}

#[pyfunction]
fn recovery_error(x_hat: Vec<f64>, x_true: Vec<f64>) -> PyResult<f64> {
    core::recovery_error(&x_hat, &x_true).map_err(to_py)
}

#[pymodule(name = "l1pareto")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_class::<PyLoss>()?;
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyProblemInstance>()?;
    m.add_class::<PyTauSolution>()?;
    m.add_class::<PySigmaReport>()?;
    m.add_class::<PyRootReport>()?;
    m.add_function(wrap_pyfunction!(project_l1, m)?)?;
    m.add_function(wrap_pyfunction!(loss_value, m)?)?;
    m.add_function(wrap_pyfunction!(loss_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(solve_tau, m)?)?;
    m.add_function(wrap_pyfunction!(dual_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(newton_solve_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pareto_curve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_root, m)?)?;
    m.add_function(wrap_pyfunction!(gen_instance, m)?)?;
    m.add_function(wrap_pyfunction!(read_problem, m)?)?;
    m.add_function(wrap_pyfunction!(write_problem, m)?)?;
    m.add_function(wrap_pyfunction!(count_nnz, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_error, m)?)?;
    Ok(())
}
