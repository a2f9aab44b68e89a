//! Python bindings. Indices are 0-based, as in the Rust library.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use infotrap::dynamics::{
    self, Allocation, Classification, InterventionSpec, SimulationConfig, TieBreakRule,
};
use infotrap::gaussian::{self, DivisionVector, Environment, FrequencyVector, GaussianPrior};
use infotrap::{oracle, scenario, spanning};

fn err(e: infotrap::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Sources `y = c'θ + ε` and the single target direction `u`.
#[pyclass(name = "Environment", frozen, module = "pyinfotrap")]
struct PyEnvironment {
    inner: Environment,
}

#[pymethods]
impl PyEnvironment {
    /// `target` defaults to the first state.
    #[new]
    #[pyo3(signature = (coefficients, target = None))]
    fn new(coefficients: Vec<Vec<f64>>, target: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match target {
            Some(u) => Environment::with_target(&coefficients, u),
            None => Environment::from_rows(&coefficients),
        }
        .map_err(err)?;
        Ok(PyEnvironment { inner })
    }

    #[getter]
    fn num_sources(&self) -> usize {
        self.inner.num_sources()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    fn coefficients(&self) -> Vec<Vec<f64>> {
        let c = self.inner.coefficients();
        (0..c.nrows())
            .map(|i| c.row(i).iter().copied().collect())
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Environment(num_sources={}, num_states={})",
            self.inner.num_sources(),
            self.inner.num_states()
        )
    }
}

#[pyclass(name = "GaussianPrior", frozen, module = "pyinfotrap")]
struct PyGaussianPrior {
    inner: GaussianPrior,
}

#[pymethods]
impl PyGaussianPrior {
    #[new]
    #[pyo3(signature = (covariance, mean = None))]
    fn new(covariance: Vec<Vec<f64>>, mean: Option<Vec<f64>>) -> PyResult<Self> {
        let mean = mean.unwrap_or_else(|| vec![0.0; covariance.len()]);
        let inner = GaussianPrior::from_rows(mean, &covariance).map_err(err)?;
        Ok(PyGaussianPrior { inner })
    }

    #[staticmethod]
    fn independent(variances: Vec<f64>) -> PyResult<Self> {
        Ok(PyGaussianPrior {
            inner: GaussianPrior::independent(&variances).map_err(err)?,
        })
    }

    fn covariance(&self) -> Vec<Vec<f64>> {
        let c = self.inner.covariance();
        (0..c.nrows())
            .map(|i| c.row(i).iter().copied().collect())
            .collect()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean().iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!("GaussianPrior(dim={})", self.inner.dim())
    }
}

/// Posterior variance of the target after `counts[i]` observations of source `i`.
#[pyfunction]
fn posterior_variance(
    env: &PyEnvironment,
    prior: &PyGaussianPrior,
    counts: Vec<u64>,
) -> PyResult<f64> {
    gaussian::posterior_variance(&env.inner, &prior.inner, &DivisionVector::new(counts))
        .map_err(err)
}

/// Normalized long-run variance under sampling frequencies; `inf` if the
/// target is not identified.
#[pyfunction]
fn asymptotic_variance(env: &PyEnvironment, frequencies: Vec<f64>) -> PyResult<f64> {
    let lambda = FrequencyVector::new(frequencies).map_err(err)?;
    gaussian::asymptotic_variance(&env.inner, &lambda).map_err(err)
}

/// Minimal spanning sets sorted by φ, as dicts with `indices`, `beta`, `phi`
/// and `lambda_star`.
#[pyfunction]
fn minimal_spanning_sets<'py>(
    py: Python<'py>,
    env: &PyEnvironment,
) -> PyResult<Bound<'py, PyList>> {
    let sets = spanning::enumerate_minimal_spanning_sets(&env.inner).map_err(err)?;
    let list = PyList::empty(py);
    for s in sets {
        let d = PyDict::new(py);
        d.set_item("indices", s.indices)?;
        d.set_item("beta", s.beta)?;
        d.set_item("phi", s.phi)?;
        d.set_item("lambda_star", s.lambda_star.weights().to_vec())?;
        list.append(d)?;
    }
    Ok(list)
}

#[pyfunction]
fn check_assumptions<'py>(py: Python<'py>, env: &PyEnvironment) -> PyResult<Bound<'py, PyDict>> {
    let r = spanning::check_assumptions(&env.inner).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("unique_minimizer", r.unique_minimizer)?;
    d.set_item("gap", r.gap)?;
    d.set_item("strong_linear_independence", r.strong_linear_independence)?;
    d.set_item(
        "unique_minimizer_every_subspace",
        r.unique_minimizer_every_subspace,
    )?;
    d.set_item("all_minimal_sets_size_k", r.all_minimal_sets_size_k)?;
    Ok(d)
}

#[pyfunction]
fn construct_trap_prior(
    env: &PyEnvironment,
    indices: Vec<usize>,
    eps: f64,
) -> PyResult<PyGaussianPrior> {
    Ok(PyGaussianPrior {
        inner: spanning::construct_trap_prior(&env.inner, &indices, eps).map_err(err)?,
    })
}

/// Greedy dynamics for `horizon` periods. At most one of `batch` and
/// `precision` may be given; `seed` switches to random tie-breaking.
#[pyfunction]
#[pyo3(signature = (env, prior, horizon, batch = None, precision = None, seed = None))]
fn simulate<'py>(
    py: Python<'py>,
    env: &PyEnvironment,
    prior: &PyGaussianPrior,
    horizon: u64,
    batch: Option<u64>,
    precision: Option<u64>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let intervention = match (batch, precision) {
        (None, None) => InterventionSpec::None,
        (Some(b), None) => InterventionSpec::BatchAllocate(b),
        (None, Some(b)) => InterventionSpec::PrecisionReplicate(b),
        _ => {
            return Err(PyValueError::new_err(
                "give at most one of batch and precision",
            ))
        }
    };
    let mut config = SimulationConfig::new(horizon).with_intervention(intervention);
    if let Some(s) = seed {
        config = config.with_tie_break(TieBreakRule::Random(s));
    }
    let trace = py
        .detach(|| dynamics::simulate(&env.inner, &prior.inner, &config))
        .map_err(err)?;
    let choices = PyList::empty(py);
    for c in &trace.choices {
        match c {
            Allocation::Single(i) => choices.append(*i)?,
            Allocation::Batch(counts) => choices.append(counts.clone())?,
        }
    }
    let d = PyDict::new(py);
    d.set_item("choices", choices)?;
    d.set_item("variance_path", trace.variance_path.clone())?;
    d.set_item("final_counts", trace.final_counts.counts().to_vec())?;
    d.set_item("classification", trace.classification.label())?;
    let trapped = match &trace.classification {
        Classification::Trap(set) => Some(set.clone()),
        _ => None,
    };
    d.set_item("trapped_set", trapped)?;
    d.set_item("inefficiency_ratio", trace.inefficiency_ratio)?;
    d.set_item(
        "frequency_estimate",
        trace.frequency_estimate.weights().to_vec(),
    )?;
    Ok(d)
}

/// Exhaustive best division of `t` observations.
#[pyfunction]
fn optimal_division<'py>(
    py: Python<'py>,
    env: &PyEnvironment,
    prior: &PyGaussianPrior,
    t: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = py
        .detach(|| oracle::optimal_division(&env.inner, &prior.inner, t))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("counts", r.counts.counts().to_vec())?;
    d.set_item("value", r.value)?;
    d.set_item("num_optima", r.num_optima)?;
    Ok(d)
}

/// Parses a scenario JSON document and returns its report as a dict.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = scenario::parse_scenario(text).map_err(err)?;
    let run = py.detach(|| scenario::run_scenario(&s)).map_err(err)?;
    py.import("json")?
        .call_method1("loads", (run.report.to_json(),))
}

#[pymodule]
fn pyinfotrap(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyGaussianPrior>()?;
    m.add_function(wrap_pyfunction!(posterior_variance, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_variance, m)?)?;
    m.add_function(wrap_pyfunction!(minimal_spanning_sets, m)?)?;
    m.add_function(wrap_pyfunction!(check_assumptions, m)?)?;
    m.add_function(wrap_pyfunction!(construct_trap_prior, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_division, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
