//! Python bindings. Datasets cross the boundary as a `Dataset` object; plans
//! come back as a `Plan` exposing weights and objective.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use stealth_core::data::{load_dataset, Schema};
use stealth_core::experiment::{run_experiment, summarize, write_report, write_summary, ExperimentConfig};
use stealth_core::stealth::{self, QuantitativeOptions};
use stealth_core::synthetic::{generate, GeneratorConfig};
use stealth_core::{detect, fairness, transport, BinSpec, CostKind, GroundCost, Record, StealthPlan};

create_exception!(stealth_sampling, InfeasibleError, PyException);
create_exception!(stealth_sampling, ConvergenceError, PyException);

fn py_err(e: stealth_core::Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        3 => InfeasibleError::new_err(msg),
        4 => ConvergenceError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn ground_cost(cost: &str, include_sensitive: bool) -> PyResult<GroundCost> {
    let kind = match cost {
        "squared_euclidean" => CostKind::SquaredEuclidean,
        "euclidean" => CostKind::Euclidean,
        other => return Err(PyValueError::new_err(format!("unknown cost `{other}`"))),
    };
    let mut c = GroundCost::new(kind);
    c.include_sensitive = include_sensitive;
    Ok(c)
}

#[pyclass(frozen, module = "stealth_sampling")]
struct Dataset {
    inner: stealth_core::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (features, sensitive, decision, num_sensitive = 2))]
    fn new(features: Vec<Vec<f64>>, sensitive: Vec<usize>, decision: Vec<u8>, num_sensitive: usize) -> PyResult<Self> {
        if features.len() != sensitive.len() || features.len() != decision.len() {
            return Err(PyValueError::new_err("features, sensitive and decision differ in length"));
        }
        let records = features
            .into_iter()
            .zip(sensitive.into_iter().zip(decision))
            .map(|(x, (s, y))| Record::new(x, s, y))
            .collect();
        let inner = stealth_core::Dataset::new(records, num_sensitive).map_err(py_err)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, sensitive_column = "s", decision_column = "y", feature_columns = None))]
    fn from_csv(
        path: &str,
        sensitive_column: &str,
        decision_column: &str,
        feature_columns: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let schema = Schema {
            features: feature_columns,
            sensitive: sensitive_column.into(),
            decision: decision_column.into(),
        };
        Ok(Dataset {
            inner: load_dataset(path, &schema).map_err(py_err)?,
        })
    }

    /// Synthetic loan-check data with `y = 1[x_1 + b s > 0.5]`.
    #[staticmethod]
    #[pyo3(signature = (n = 1000, d = 1, b = 0.2, group_probability = 0.5, seed = 0))]
    fn synthetic(n: usize, d: usize, b: f64, group_probability: f64, seed: u64) -> PyResult<Self> {
        let cfg = GeneratorConfig {
            n,
            d,
            b,
            group_probability,
            seed,
            ..GeneratorConfig::default()
        };
        Ok(Dataset {
            inner: generate(&cfg).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.records().iter().map(|r| r.features.clone()).collect()
    }

    #[getter]
    fn sensitive(&self) -> Vec<usize> {
        self.inner.records().iter().map(|r| r.sensitive).collect()
    }

    #[getter]
    fn decision(&self) -> Vec<u8> {
        self.inner.records().iter().map(|r| r.decision).collect()
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        Ok(Dataset {
            inner: self.inner.subset(&indices).map_err(py_err)?,
        })
    }

    fn demographic_parity(&self) -> PyResult<f64> {
        fairness::demographic_parity(&self.inner).map_err(py_err)
    }
}

#[pyclass(frozen, module = "stealth_sampling")]
struct Plan {
    inner: StealthPlan,
}

#[pymethods]
impl Plan {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.measure.weights().to_vec()
    }

    /// Transport cost at total mass K.
    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn objective_per_unit(&self) -> f64 {
        self.inner.objective_per_unit
    }

    #[getter]
    fn bin_counts(&self) -> Option<Vec<u64>> {
        self.inner.bin_spec.as_ref().map(|s| s.dense().to_vec())
    }

    /// Draws a concrete subset; returns sorted record indices.
    fn draw(&self, data: &Dataset, seed: u64) -> PyResult<Vec<usize>> {
        Ok(stealth::draw_sample(&data.inner, &self.inner, seed).map_err(py_err)?.indices)
    }

    fn __repr__(&self) -> String {
        format!("Plan(mass={}, objective={})", self.inner.sample_size(), self.inner.objective)
    }
}

/// Per-bin counts `k(s, y)` in bin order `(s, y) -> 2 s + y`.
#[pyfunction]
fn target_bin_counts(k: u64, alpha: f64, group_probability: Vec<f64>) -> PyResult<Vec<u64>> {
    Ok(fairness::target_bin_counts(k, alpha, &group_probability)
        .map_err(py_err)?
        .dense()
        .to_vec())
}

fn spec(counts: Vec<u64>) -> PyResult<BinSpec> {
    BinSpec::from_dense(counts).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (data, counts, cost = "squared_euclidean", include_sensitive = false))]
fn stealth_measure(data: &Dataset, counts: Vec<u64>, cost: &str, include_sensitive: bool) -> PyResult<Plan> {
    let cost = ground_cost(cost, include_sensitive)?;
    let inner = stealth::stealth_measure(&data.inner, &spec(counts)?, &cost).map_err(py_err)?;
    Ok(Plan { inner })
}

#[pyfunction]
#[pyo3(signature = (data, counts, subset_size, rounds = 30, seed = 0, cost = "squared_euclidean", include_sensitive = false))]
fn bootstrap_stealth_measure(
    data: &Dataset,
    counts: Vec<u64>,
    subset_size: usize,
    rounds: usize,
    seed: u64,
    cost: &str,
    include_sensitive: bool,
) -> PyResult<Plan> {
    let cost = ground_cost(cost, include_sensitive)?;
    let inner = stealth::bootstrap_stealth_measure(&data.inner, &spec(counts)?, &cost, subset_size, rounds, seed)
        .map_err(py_err)?;
    Ok(Plan { inner })
}

/// Stealth measure that keeps the mean of a real-valued sensitive feature
/// within `target_mean +- tolerance` in every decision category.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (data, k, sensitive_feature, target_mean, tolerance, max_iterations = 500, cost = "squared_euclidean", cost_features = None))]
fn quantitative_stealth_measure(
    data: &Dataset,
    k: u64,
    sensitive_feature: usize,
    target_mean: f64,
    tolerance: f64,
    max_iterations: usize,
    cost: &str,
    cost_features: Option<Vec<usize>>,
) -> PyResult<Plan> {
    let mut cost = ground_cost(cost, false)?;
    cost.feature_mask = cost_features;
    let opts = QuantitativeOptions {
        max_iterations,
        ..QuantitativeOptions::default()
    };
    let report = stealth::quantitative_stealth_measure_with(
        &data.inner,
        k,
        sensitive_feature,
        target_mean,
        tolerance,
        &cost,
        &opts,
    )
    .map_err(py_err)?;
    Ok(Plan { inner: report.plan })
}

#[pyfunction]
fn case_control_sample(data: &Dataset, counts: Vec<u64>, seed: u64) -> PyResult<Vec<usize>> {
    Ok(stealth::case_control_sample(&data.inner, &spec(counts)?, seed)
        .map_err(py_err)?
        .indices)
}

#[pyfunction]
#[pyo3(signature = (a, b, cost = "squared_euclidean", include_sensitive = false))]
fn empirical_wd(a: &Dataset, b: &Dataset, cost: &str, include_sensitive: bool) -> PyResult<f64> {
    transport::empirical_wd(&a.inner, &b.inner, &ground_cost(cost, include_sensitive)?).map_err(py_err)
}

/// Two-sample KS statistic and asymptotic p-value.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    detect::ks_two_sample(&a, &b).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (wasserstein, k, s = 1.0, c = (2.0 / std::f64::consts::PI).sqrt(), tv = 0.0))]
fn theorem1_bound(wasserstein: f64, k: u64, s: f64, c: f64, tv: f64) -> PyResult<f64> {
    detect::theorem1_bound(wasserstein, k, s, c, tv).map_err(py_err)
}

/// Runs an experiment from TOML config text; returns (report CSV, summary CSV).
#[pyfunction]
fn run_experiment_toml(py: Python<'_>, config: &str) -> PyResult<(String, String)> {
    let cfg = ExperimentConfig::from_toml_str(config).map_err(py_err)?;
    let report = py.detach(|| run_experiment(&cfg)).map_err(py_err)?;
    let mut rep = Vec::new();
    write_report(&mut rep, &report).map_err(py_err)?;
    let mut sum = Vec::new();
    write_summary(&mut sum, &summarize(&report).map_err(py_err)?).map_err(py_err)?;
    let text = |b: Vec<u8>| String::from_utf8(b).map_err(|e| PyValueError::new_err(e.to_string()));
    Ok((text(rep)?, text(sum)?))
}

#[pymodule]
fn stealth_sampling(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Plan>()?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("ConvergenceError", m.py().get_type::<ConvergenceError>())?;
    m.add_function(wrap_pyfunction!(target_bin_counts, m)?)?;
    m.add_function(wrap_pyfunction!(stealth_measure, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_stealth_measure, m)?)?;
    m.add_function(wrap_pyfunction!(quantitative_stealth_measure, m)?)?;
    m.add_function(wrap_pyfunction!(case_control_sample, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_wd, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_toml, m)?)?;
    Ok(())
}
