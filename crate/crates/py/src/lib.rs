//! Python bindings: the closed-form error expressions, the Monte-Carlo
//! harness, the offline benchmark, and a stateful solver handle.
//!
//! Matrices cross the boundary as row-major nested lists; a divergent closed
//! form comes back as `float('inf')`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use cocoa_cl::cocoa::{CocoaState, Partition};
use cocoa_cl::metrics::{
    run_monte_carlo, run_monte_carlo_resampling, McConfig, McSummary,
};
use cocoa_cl::taskgen::{ParamModel, RegressorModel, TaskData, TaskSequenceSpec};
use cocoa_cl::{theory, Error, Matrix, RngStream, Vector};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io { .. } | Error::DataFormat { .. } => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix needs at least one row"));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must be non-empty and equally long"));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn to_vectors(vs: Vec<Vec<f64>>) -> PyResult<Vec<Vector>> {
    Ok(vs.into_iter().map(Vector::from_vec).collect())
}

fn spec_from_args(
    p: usize,
    p_shared: usize,
    tasks: usize,
    n: usize,
    sigma2: f64,
    seed: u64,
    eps: f64,
    energy: Option<f64>,
) -> PyResult<TaskSequenceSpec> {
    let regressors = if eps == 0.0 {
        RegressorModel::IidGaussian
    } else {
        RegressorModel::Toeplitz { eps }
    };
    let params = match energy {
        Some(e) => ParamModel::RandomEnergy { energy: e },
        None => ParamModel::Normalized,
    };
    TaskSequenceSpec::uniform(p, p_shared, tasks, n, sigma2, regressors, params, seed)
        .map_err(to_py_err)
}

fn summary_dict<'py>(
    py: Python<'py>,
    s: &McSummary,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("mean", s.mean)?;
    dict.set_item("stderr", s.stderr)?;
    dict.set_item("trials", s.trials)?;
    dict.set_item("diverged", s.diverged)?;
    dict.set_item("used", s.used)?;
    Ok(dict)
}

/// Dimension coefficients `(r, gamma)`; `gamma` is infinite at the
/// interpolation threshold.
#[pyfunction]
fn coeffs(n: usize, p_k: usize) -> (f64, f64) {
    let c = theory::coeffs(n, p_k);
    (c.r, c.gamma)
}

/// Equal-dimension coefficients as `(r, gamma, h, b)`.
#[pyfunction]
fn h_equal(n: usize, p: usize, k: usize) -> PyResult<(f64, f64, f64, f64)> {
    let sc = theory::h_equal(n, p, k).map_err(to_py_err)?;
    Ok((sc.r, sc.gamma, sc.h, sc.b))
}

/// Expected generalization error of the estimate trained through `trained`
/// tasks, for arbitrary per-task samples and per-node block sizes.
#[pyfunction]
#[pyo3(signature = (w_true, noise_vars, samples, sizes, trained=None))]
fn theorem1_error(
    w_true: Vec<Vec<f64>>,
    noise_vars: Vec<f64>,
    samples: Vec<usize>,
    sizes: Vec<usize>,
    trained: Option<usize>,
) -> PyResult<f64> {
    let w = to_vectors(w_true)?;
    let horizon = w.len();
    let dims = theory::TheoryDims::new(samples, sizes).map_err(to_py_err)?;
    Ok(theory::theorem1_error(&w, &noise_vars, &dims, trained.unwrap_or(horizon), horizon))
}

/// Equal-dimension closed form of the expected generalization error.
#[pyfunction]
#[pyo3(signature = (w_true, noise_vars, n, p, k, trained=None))]
fn corollary_equal_dims(
    w_true: Vec<Vec<f64>>,
    noise_vars: Vec<f64>,
    n: usize,
    p: usize,
    k: usize,
    trained: Option<usize>,
) -> PyResult<f64> {
    let w = to_vectors(w_true)?;
    let horizon = w.len();
    theory::corollary_equal_dims(&w, &noise_vars, n, p, k, trained.unwrap_or(horizon), horizon)
        .map_err(to_py_err)
}

/// Single-node centralized error (minus the noise floor) for `p > n + 1`.
#[pyfunction]
fn centralized_error(w_true: Vec<Vec<f64>>, sigma2: f64, n: usize, p: usize) -> PyResult<f64> {
    let w = to_vectors(w_true)?;
    let horizon = w.len();
    Ok(theory::centralized_error(&w, sigma2, n, p, horizon))
}

/// Shared-parameter error after training on `tasks` tasks.
#[pyfunction]
fn theorem2_error(
    w_star: Vec<f64>,
    sigma2: f64,
    samples: Vec<usize>,
    sizes: Vec<usize>,
    tasks: usize,
) -> PyResult<f64> {
    let dims = theory::TheoryDims::new(samples, sizes).map_err(to_py_err)?;
    Ok(theory::theorem2_error(&Vector::from_vec(w_star), sigma2, &dims, tasks))
}

/// Per-task zero-error conditions for the shared-parameter limit.
#[pyfunction]
fn zero_error_conditions(samples: Vec<usize>, sizes: Vec<usize>) -> PyResult<Vec<bool>> {
    let dims = theory::TheoryDims::new(samples, sizes).map_err(to_py_err)?;
    Ok(theory::zero_error_conditions(&dims))
}

/// Decomposition coefficients `(psi0, psi1, psi2, psi3, psi4)`.
#[pyfunction]
fn psi_coeffs(n: usize, p: usize, k: usize, tasks: usize) -> PyResult<(f64, f64, f64, f64, f64)> {
    let psi = theory::psi_coeffs(n, p, k, tasks).map_err(to_py_err)?;
    Ok((psi.psi0, psi.psi1, psi.psi2, psi.psi3, psi.psi4))
}

/// Expected error under the shared-subspace task model.
#[pyfunction]
fn corollary4_error(
    p: usize,
    p_shared: usize,
    e_w: f64,
    sigma2: f64,
    n: usize,
    k: usize,
    tasks: usize,
) -> PyResult<f64> {
    theory::corollary4_error(p, p_shared, e_w, sigma2, n, k, tasks).map_err(to_py_err)
}

/// Infinite-task limit of the shared-subspace error (`inf` when `|h| >= 1`).
#[pyfunction]
fn limit_error_inf_tasks(
    p: usize,
    p_shared: usize,
    e_w: f64,
    sigma2: f64,
    n: usize,
    k: usize,
) -> PyResult<f64> {
    theory::limit_error_inf_tasks(p, p_shared, e_w, sigma2, n, k).map_err(to_py_err)
}

/// Seeded Monte-Carlo estimate of the solver's expected generalization error.
/// Returns a dict with `mean`, `stderr`, `trials`, `diverged` and `used`.
#[pyfunction]
#[pyo3(signature = (p, p_shared, tasks, n, sigma2, k, iterations, trials, seed,
                    eps=0.0, energy=None, resample_params=false))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    p: usize,
    p_shared: usize,
    tasks: usize,
    n: usize,
    sigma2: f64,
    k: usize,
    iterations: usize,
    trials: usize,
    seed: u64,
    eps: f64,
    energy: Option<f64>,
    resample_params: bool,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let spec = spec_from_args(p, p_shared, tasks, n, sigma2, seed, eps, energy)?;
    let cfg = McConfig::new(Partition::equal(p, k).map_err(to_py_err)?, iterations);
    let rng = RngStream::new(seed, 0);
    let summary = if resample_params {
        run_monte_carlo_resampling(&spec, &cfg, trials, &rng)
    } else {
        run_monte_carlo(&spec, &cfg, trials, &rng)
    }
    .map_err(to_py_err)?;
    summary_dict(py, &summary)
}

/// Monte-Carlo error of the offline centralized least-squares benchmark.
#[pyfunction]
#[pyo3(signature = (p, p_shared, tasks, n, sigma2, trials, seed, energy=None))]
#[allow(clippy::too_many_arguments)]
fn offline_ls_error<'py>(
    py: Python<'py>,
    p: usize,
    p_shared: usize,
    tasks: usize,
    n: usize,
    sigma2: f64,
    trials: usize,
    seed: u64,
    energy: Option<f64>,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let spec = spec_from_args(p, p_shared, tasks, n, sigma2, seed, 0.0, energy)?;
    let values: Result<Vec<f64>, Error> = (0..trials)
        .map(|i| {
            let mut rng = RngStream::new(seed, 1 + i as u64);
            let w = cocoa_cl::taskgen::generate_parameters(&spec, &mut rng);
            let data = cocoa_cl::taskgen::generate_task_data(&spec, &w, &mut rng)?;
            let ls = cocoa_cl::baseline::offline_ls(&data)?;
            cocoa_cl::metrics::generalization_exact(&ls, &w, &spec.noise_vars)
        })
        .collect();
    let values = values.map_err(to_py_err)?;
    let summary = cocoa_cl::metrics::summarize(&values, false);
    summary_dict(py, &summary)
}

/// Stateful solver handle over an explicit feature partition.
#[pyclass]
struct CocoaSolver {
    state: CocoaState,
    task_counter: usize,
}

#[pymethods]
impl CocoaSolver {
    /// Create a solver for the given per-node block sizes.
    #[new]
    fn new(sizes: Vec<usize>) -> PyResult<Self> {
        let partition = Partition::from_sizes(sizes).map_err(to_py_err)?;
        Ok(Self { state: CocoaState::new(partition), task_counter: 0 })
    }

    /// Current stacked estimate.
    fn estimate(&self) -> Vec<f64> {
        self.state.w_hat().iter().copied().collect()
    }

    fn set_estimate(&mut self, w: Vec<f64>) -> PyResult<()> {
        self.state.set_estimate(Vector::from_vec(w)).map_err(to_py_err)
    }

    /// Run `iterations` solver steps on one task given as a row-major
    /// regressor matrix and its outputs; the estimate is carried over.
    fn run_task(
        &mut self,
        regressors: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        iterations: usize,
    ) -> PyResult<Vec<f64>> {
        let a = to_matrix(regressors)?;
        if outputs.len() != a.nrows() {
            return Err(PyValueError::new_err(format!(
                "{} outputs for {} rows",
                outputs.len(),
                a.nrows()
            )));
        }
        self.task_counter += 1;
        let p = self.state.partition().total();
        let data = TaskData {
            index: self.task_counter,
            regressors: a,
            outputs: Vector::from_vec(outputs),
            w_true: Vector::zeros(p),
            noise_var: 0.0,
        };
        self.state.run_task(&data, iterations).map_err(to_py_err)?;
        Ok(self.estimate())
    }

    /// Number of tasks processed so far.
    fn tasks_seen(&self) -> usize {
        self.task_counter
    }
}

#[pymodule]
fn cocoa_cl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(h_equal, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_error, m)?)?;
    m.add_function(wrap_pyfunction!(corollary_equal_dims, m)?)?;
    m.add_function(wrap_pyfunction!(centralized_error, m)?)?;
    m.add_function(wrap_pyfunction!(theorem2_error, m)?)?;
    m.add_function(wrap_pyfunction!(zero_error_conditions, m)?)?;
    m.add_function(wrap_pyfunction!(psi_coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(corollary4_error, m)?)?;
    m.add_function(wrap_pyfunction!(limit_error_inf_tasks, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(offline_ls_error, m)?)?;
    m.add_class::<CocoaSolver>()?;
    Ok(())
}
