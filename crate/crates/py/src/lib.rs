//! Python bindings: the problem type, landscape census, stochastic solver,
//! and the commutativity/diffusion helpers, with matrices passed as nested
//! lists of floats.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use sgha_core::diffusion;
use sgha_core::harness;
use sgha_core::landscape;
use sgha_core::matrix::Mat;
use sgha_core::oracle::OracleSpec;
use sgha_core::sgha::{self, SghaConfig, StepMode};
use sgha_core::Classification;

fn to_py_err(e: sgha_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mat_from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Mat> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what}: rows must be nonempty and rectangular")));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn oracle_setup(kind: &str, n_draws: usize, sigma: f64) -> PyResult<harness::OracleSetup> {
    match kind {
        "exact" => Ok(harness::OracleSetup::Exact),
        "gauss_cov" => Ok(harness::OracleSetup::GaussCov { n_draws }),
        "add_noise" => Ok(harness::OracleSetup::AddNoise { sigma }),
        other => Err(PyValueError::new_err(format!(
            "unknown oracle kind {other:?}; use exact, gauss_cov, or add_noise"
        ))),
    }
}

/// A generalized eigenvalue instance `(A, B, r)`.
#[pyclass(name = "GevProblem")]
struct PyGevProblem {
    inner: sgha_core::GevProblem,
}

#[pymethods]
impl PyGevProblem {
    /// GevProblem(a, b, r): `a`, `b` as row-major nested lists.
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, r: usize) -> PyResult<Self> {
        let a = mat_from_rows(a, "A")?;
        let b = mat_from_rows(b, "B")?;
        Ok(Self { inner: sgha_core::GevProblem::new(a, b, r).map_err(to_py_err)? })
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn rank_target(&self) -> usize {
        self.inner.r()
    }

    fn b_rank(&self) -> usize {
        self.inner.b_rank()
    }

    fn a(&self) -> Vec<Vec<f64>> {
        mat_to_rows(self.inner.a())
    }

    fn b(&self) -> Vec<Vec<f64>> {
        mat_to_rows(self.inner.b())
    }

    /// `(gap, passes)` of the whitened eigenvalue gap at position r.
    #[pyo3(signature = (tol = 1e-8))]
    fn eigengap(&self, tol: f64) -> PyResult<(f64, bool)> {
        let g = self.inner.check_eigengap(tol).map_err(to_py_err)?;
        Ok((g.gap, g.pass))
    }

    /// Optimal objective value `-sum_{i<=r} lambda_i(A~)`.
    fn ground_truth_value(&self) -> PyResult<f64> {
        Ok(self.inner.ground_truth().map_err(to_py_err)?.value)
    }

    /// Canonical optimizer as nested rows.
    fn ground_truth_x(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(mat_to_rows(&self.inner.ground_truth().map_err(to_py_err)?.x_star))
    }

    fn lagrangian(&self, x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<f64> {
        let x = mat_from_rows(x, "X")?;
        let y = mat_from_rows(y, "Y")?;
        self.inner.lagrangian(&x, &y).map_err(to_py_err)
    }

    fn grad_lagrangian(
        &self,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let x = mat_from_rows(x, "X")?;
        let y = mat_from_rows(y, "Y")?;
        let (gx, gy) = self.inner.grad_lagrangian(&x, &y).map_err(to_py_err)?;
        Ok((mat_to_rows(&gx), mat_to_rows(&gy)))
    }

    /// `||B^{1/2} X X^T B^{1/2} - B^{1/2} X* X*^T B^{1/2}||_F`.
    fn optimization_error(&self, x: Vec<Vec<f64>>) -> PyResult<f64> {
        let x = mat_from_rows(x, "X")?;
        let truth = self.inner.ground_truth().map_err(to_py_err)?;
        Ok(sgha::optimization_error(&truth, &x))
    }

    /// All classified equilibria as dicts with 1-based `index_set`.
    #[pyo3(signature = (tol = 1e-7))]
    fn equilibria<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyList>> {
        let eqs = landscape::classified_equilibria(&self.inner, tol).map_err(to_py_err)?;
        let list = PyList::empty(py);
        for eq in eqs {
            let d = PyDict::new(py);
            let idx: Vec<usize> = eq.index_set.iter().map(|i| i + 1).collect();
            d.set_item("index_set", idx)?;
            d.set_item("x", mat_to_rows(&eq.x))?;
            d.set_item("y", mat_to_rows(&eq.y))?;
            d.set_item(
                "lagrangian",
                self.inner.lagrangian(&eq.x, &eq.y).map_err(to_py_err)?,
            )?;
            match eq.classification.as_ref().unwrap() {
                Classification::Stable { lambda_min, hessian_rank } => {
                    d.set_item("stable", true)?;
                    d.set_item("lambda_min", *lambda_min)?;
                    d.set_item("hessian_rank", *hessian_rank)?;
                }
                Classification::Unstable { lambda_min, hessian_rank, curvature_bound } => {
                    d.set_item("stable", false)?;
                    d.set_item("lambda_min", *lambda_min)?;
                    d.set_item("hessian_rank", *hessian_rank)?;
                    d.set_item("curvature_bound", *curvature_bound)?;
                }
            }
            list.append(d)?;
        }
        Ok(list)
    }

    /// Equilibria of a rank-deficient-B instance (unclassified).
    fn equilibria_singular<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let eqs = landscape::enumerate_equilibria_singular(&self.inner).map_err(to_py_err)?;
        let list = PyList::empty(py);
        for eq in eqs {
            let d = PyDict::new(py);
            let idx: Vec<usize> = eq.index_set.iter().map(|i| i + 1).collect();
            d.set_item("index_set", idx)?;
            d.set_item("x", mat_to_rows(&eq.x))?;
            d.set_item("y", mat_to_rows(&eq.y))?;
            let (g, f) = landscape::kkt_residual(&self.inner, &eq.x, &eq.y).map_err(to_py_err)?;
            d.set_item("kkt_primal", g)?;
            d.set_item("kkt_feasibility", f)?;
            list.append(d)?;
        }
        Ok(list)
    }

    /// `(well_defined, witness)` for a rank-deficient B.
    #[pyo3(signature = (tol = 1e-8))]
    fn check_well_defined_singular(&self, tol: f64) -> PyResult<(bool, Option<Vec<f64>>)> {
        match self.inner.check_well_defined_singular(tol).map_err(to_py_err)? {
            sgha_core::SingularVerdict::WellDefined => Ok((true, None)),
            sgha_core::SingularVerdict::IllDefined { witness } => {
                Ok((false, Some(witness.iter().cloned().collect())))
            }
        }
    }

    /// Runs the stochastic solver; returns the recorded trajectory and the
    /// final iterate as a dict.
    #[pyo3(signature = (eta, iters, mode = "combined", oracle = "gauss_cov",
                        n_draws = 40, sigma = 0.1, seed = 0, record_stride = 100))]
    #[allow(clippy::too_many_arguments)]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        eta: f64,
        iters: usize,
        mode: &str,
        oracle: &str,
        n_draws: usize,
        sigma: f64,
        seed: u64,
        record_stride: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let truth = self.inner.ground_truth().map_err(to_py_err)?;
        let setup = oracle_setup(oracle, n_draws, sigma)?;
        let derived = harness::derive_seeds(seed);
        let spec_a: OracleSpec =
            harness::oracle_for_target(self.inner.a(), setup, derived.oracle_a).map_err(to_py_err)?;
        let spec_b: OracleSpec =
            harness::oracle_for_target(self.inner.b(), setup, derived.oracle_b).map_err(to_py_err)?;
        let mut cfg = SghaConfig::new(eta, iters);
        cfg.mode = match mode {
            "combined" => StepMode::Combined,
            "two-step" => StepMode::TwoStep,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
        };
        cfg.record_stride = record_stride;
        cfg.init_seed = derived.init;
        let out =
            sgha::run(&self.inner, &truth, &spec_a, &spec_b, &cfg, None).map_err(to_py_err)?;
        let d = PyDict::new(py);
        d.set_item("iters", out.trajectory.records.iter().map(|r| r.iter).collect::<Vec<_>>())?;
        d.set_item("errors", out.trajectory.records.iter().map(|r| r.error).collect::<Vec<_>>())?;
        d.set_item(
            "lagrangians",
            out.trajectory.records.iter().map(|r| r.lagrangian).collect::<Vec<_>>(),
        )?;
        d.set_item(
            "feasibilities",
            out.trajectory.records.iter().map(|r| r.feasibility).collect::<Vec<_>>(),
        )?;
        d.set_item("final_x", mat_to_rows(&out.final_state.x))?;
        d.set_item("final_error", out.trajectory.final_error())?;
        d.set_item("alignment", sgha::subspace_alignment(&truth, &out.final_state.x))?;
        Ok(d)
    }
}

/// Benchmark pencil families 1-3.
#[pyfunction]
#[pyo3(signature = (setting, d, seed = 0))]
fn build_setting(setting: u8, d: usize, seed: u64) -> PyResult<PyGevProblem> {
    Ok(PyGevProblem { inner: harness::build_setting(setting, d, seed).map_err(to_py_err)? })
}

/// Shared-eigenbasis data for a commuting pencil, or `None`.
#[pyfunction]
#[pyo3(signature = (a, b, tol = 1e-9))]
fn check_commutative<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    tol: f64,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let a = mat_from_rows(a, "A")?;
    let b = mat_from_rows(b, "B")?;
    match diffusion::check_commutative(&a, &b, tol).map_err(to_py_err)? {
        None => Ok(None),
        Some(spec) => {
            let d = PyDict::new(py);
            d.set_item("mu", spec.mu().iter().cloned().collect::<Vec<_>>())?;
            d.set_item("lambda", spec.lambda().iter().cloned().collect::<Vec<_>>())?;
            d.set_item("beta", spec.beta().iter().cloned().collect::<Vec<_>>())?;
            d.set_item("gap", spec.gap())?;
            d.set_item("mu_min", spec.mu_min())?;
            d.set_item("mu_max", spec.mu_max())?;
            Ok(Some(d))
        }
    }
}

/// Closed-form O-U stationary variance `G / (2 mu (beta_1 - beta_i))`.
#[pyfunction]
fn ou_stationary_variance(g_i1: f64, mu_i: f64, beta_1: f64, beta_i: f64) -> PyResult<f64> {
    diffusion::ou_stationary_variance(g_i1, mu_i, beta_1, beta_i).map_err(to_py_err)
}

#[pymodule]
fn sgha_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGevProblem>()?;
    m.add_function(wrap_pyfunction!(build_setting, m)?)?;
    m.add_function(wrap_pyfunction!(check_commutative, m)?)?;
    m.add_function(wrap_pyfunction!(ou_stationary_variance, m)?)?;
    Ok(())
}
