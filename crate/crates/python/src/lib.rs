//! Python bindings: datasets, training, prediction, metrics and the simulator.

use std::path::PathBuf;

use farva::data::Dataset as CoreDataset;
use farva::error::FarvaError;
use farva::gibbs::ChainConfig;
use farva::io;
use farva::metrics;
use farva::nbc;
use farva::numerics::ChainRng;
use farva::pipeline::{self, BenchmarkConfig, ModelKind, TrainSettings};
use farva::predict::DEFAULT_N_MC;
use farva::simulate::{generate_dataset, split_train_test, Preset};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: FarvaError) -> PyErr {
    match e {
        FarvaError::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Symptom records with their schema, covariates and (possibly missing) causes.
#[pyclass(name = "Dataset", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataset {
    inner: CoreDataset,
}

#[pymethods]
impl PyDataset {
    /// Read a CSV with its schema file. `covariates` are names without `x_`.
    #[staticmethod]
    #[pyo3(signature = (data, schema, covariates = Vec::new(), n_causes = None))]
    fn read_csv(data: PathBuf, schema: PathBuf, covariates: Vec<String>, n_causes: Option<usize>) -> PyResult<Self> {
        let schema = io::read_schema(&schema).map_err(py_err)?;
        let inner = io::read_dataset(&data, &schema, &covariates, n_causes).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn write_csv(&self, data: PathBuf, schema: PathBuf) -> PyResult<()> {
        io::write_dataset(&data, &self.inner).map_err(py_err)?;
        io::write_schema(&schema, &self.inner.schema).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Number of model columns after categorical expansion.
    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn n_causes(&self) -> usize {
        self.inner.n_causes
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids.clone()
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names.clone()
    }

    /// Zero-based causes, `None` where unknown.
    #[getter]
    fn labels(&self) -> Vec<Option<usize>> {
        self.inner.labels.clone()
    }

    /// Row `i` on the observed scale, `None` for missing cells.
    fn row(&self, i: usize) -> PyResult<Vec<Option<f64>>> {
        if i >= self.inner.n() {
            return Err(PyValueError::new_err(format!("row {i} out of range")));
        }
        Ok(self.inner.row(i).to_vec())
    }

    /// The same records with covariates dropped (intercept only).
    fn intercept_only(&self) -> Self {
        Self {
            inner: self.inner.intercept_only(),
        }
    }

    /// Random train/test split; returns `(train, test, test_labels)` with the
    /// test causes hidden.
    #[pyo3(signature = (test_fraction = 0.25, seed = 0))]
    fn split(&self, test_fraction: f64, seed: u64) -> PyResult<(Self, Self, Vec<usize>)> {
        let s = split_train_test(&self.inner, test_fraction, &mut ChainRng::new(seed)).map_err(py_err)?;
        Ok((Self { inner: s.train }, Self { inner: s.test }, s.test_labels))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, p={}, causes={}, covariates={:?})",
            self.inner.n(),
            self.inner.p(),
            self.inner.n_causes,
            self.inner.covariate_names
        )
    }
}

/// Retained snapshots of a fitted chain.
#[pyclass(name = "Posterior", skip_from_py_object)]
pub struct PyPosterior {
    inner: io::PosteriorFile,
}

#[pymethods]
impl PyPosterior {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: io::read_posterior(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::write_posterior(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn n_snapshots(&self) -> usize {
        self.inner.samples.len()
    }

    #[getter]
    fn n_causes(&self) -> usize {
        self.inner.header.n_causes
    }

    #[getter]
    fn n_factors(&self) -> usize {
        self.inner.header.n_factors
    }

    #[getter]
    fn n_basis(&self) -> usize {
        self.inner.header.n_basis
    }

    /// Posterior mean column norms of Δ.
    #[getter]
    fn shrinkage(&self) -> Vec<f64> {
        self.inner.header.shrinkage.clone()
    }

    #[getter]
    fn factor_contribution(&self) -> Vec<f64> {
        self.inner.header.factor_contribution.clone()
    }

    /// Mean of π over snapshots.
    fn mean_pi(&self) -> Vec<f64> {
        let s = &self.inner.samples.snapshots;
        let c = self.inner.header.n_causes;
        (0..c).map(|k| s.iter().map(|st| st.pi[k]).sum::<f64>() / s.len() as f64).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Posterior(snapshots={}, causes={}, K={}, L={})",
            self.inner.samples.len(),
            self.inner.header.n_causes,
            self.inner.header.n_factors,
            self.inner.header.n_basis
        )
    }
}

/// Cause posteriors and the CSMF estimate for a dataset.
#[pyclass(name = "Prediction", get_all, skip_from_py_object)]
pub struct PyPrediction {
    probabilities: Vec<Vec<f64>>,
    top_cause: Vec<usize>,
    csmf_mean: Vec<f64>,
    csmf_lo: Vec<f64>,
    csmf_hi: Vec<f64>,
}

/// Fit one chain. The dataset's continuous columns are standardized in place
/// on a copy; the original is left untouched.
#[pyfunction]
#[pyo3(signature = (data, k = None, l = None, iterations = 2000, burn_in = 1000, thinning = 20, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &PyDataset,
    k: Option<usize>,
    l: Option<usize>,
    iterations: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
) -> PyResult<PyPosterior> {
    let mut ds = data.inner.clone();
    let settings = TrainSettings {
        n_factors: k,
        n_basis: l,
        chain: ChainConfig {
            iterations,
            burn_in,
            thinning,
            seed,
        },
    };
    let inner = py.detach(|| pipeline::train(&mut ds, &settings)).map_err(py_err)?;
    Ok(PyPosterior { inner })
}

#[pyfunction]
#[pyo3(signature = (posterior, data, n_mc = DEFAULT_N_MC, seed = 0))]
fn predict(py: Python<'_>, posterior: &PyPosterior, data: &PyDataset, n_mc: usize, seed: u64) -> PyResult<PyPrediction> {
    let mut ds = data.inner.clone();
    let (pred, csmf) = py
        .detach(|| pipeline::predict(&posterior.inner, &mut ds, n_mc, seed))
        .map_err(py_err)?;
    Ok(PyPrediction {
        probabilities: pred.posterior.probabilities,
        top_cause: pred.posterior.top_cause,
        csmf_mean: csmf.mean,
        csmf_lo: csmf.lo,
        csmf_hi: csmf.hi,
    })
}

/// Simulate one labelled dataset from a named preset (a–f, g1–g3).
#[pyfunction]
#[pyo3(signature = (preset, seed = 0))]
fn simulate(preset: &str, seed: u64) -> PyResult<PyDataset> {
    let preset: Preset = preset.parse().map_err(py_err)?;
    let (inner, _) = generate_dataset(&preset.config(), &mut ChainRng::new(seed)).map_err(py_err)?;
    Ok(PyDataset { inner })
}

/// Naive Bayes cause probabilities for `test` after fitting on `train`.
#[pyfunction]
#[pyo3(signature = (train, test, smoothing = nbc::DEFAULT_SMOOTHING))]
fn nbc_predict(train: &PyDataset, test: &PyDataset, smoothing: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = nbc::nbc_fit(&train.inner, smoothing).map_err(py_err)?;
    Ok(nbc::nbc_predict_dataset(&m, &test.inner))
}

#[pyfunction]
fn acc1(truth: Vec<usize>, predicted: Vec<usize>) -> PyResult<f64> {
    metrics::acc1(&truth, &predicted).map_err(py_err)
}

#[pyfunction]
fn acc_csmf(truth: Vec<f64>, predicted: Vec<f64>) -> PyResult<f64> {
    metrics::acc_csmf(&truth, &predicted).map_err(py_err)
}

#[pyfunction]
fn ccc(acc1: f64, n_causes: usize) -> PyResult<f64> {
    metrics::ccc(acc1, n_causes).map_err(py_err)
}

#[pyfunction]
fn yules_q(a: f64, b: f64, c: f64, d: f64) -> PyResult<f64> {
    metrics::yules_q(a, b, c, d).map_err(py_err)
}

#[pyfunction]
fn csmf_from_labels(labels: Vec<usize>, n_causes: usize) -> PyResult<Vec<f64>> {
    metrics::csmf_from_labels(&labels, n_causes).map_err(py_err)
}

/// Simulate, fit and score models on a preset. Returns the JSON result.
#[pyfunction]
#[pyo3(signature = (preset, n_datasets = 10, models = vec!["farva".to_string(), "nbc".to_string()], seed = 0, k = 6, l = 5, iterations = 2000, burn_in = 1000, thinning = 20, n_mc = DEFAULT_N_MC, jobs = 1))]
#[allow(clippy::too_many_arguments)]
fn benchmark(
    py: Python<'_>,
    preset: &str,
    n_datasets: usize,
    models: Vec<String>,
    seed: u64,
    k: usize,
    l: usize,
    iterations: usize,
    burn_in: usize,
    thinning: usize,
    n_mc: usize,
    jobs: usize,
) -> PyResult<String> {
    let preset: Preset = preset.parse().map_err(py_err)?;
    let models = models
        .iter()
        .map(|m| m.parse::<ModelKind>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    let cfg = BenchmarkConfig {
        n_factors: k,
        n_basis: l,
        iterations,
        burn_in,
        thinning,
        n_mc,
        jobs,
        ..BenchmarkConfig::new(preset, n_datasets, models, seed)
    };
    let result = py.detach(|| pipeline::run_benchmark(&cfg)).map_err(py_err)?;
    serde_json::to_string(&result).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn farva_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPosterior>()?;
    m.add_class::<PyPrediction>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(nbc_predict, m)?)?;
    m.add_function(wrap_pyfunction!(acc1, m)?)?;
    m.add_function(wrap_pyfunction!(acc_csmf, m)?)?;
    m.add_function(wrap_pyfunction!(ccc, m)?)?;
    m.add_function(wrap_pyfunction!(yules_q, m)?)?;
    m.add_function(wrap_pyfunction!(csmf_from_labels, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    Ok(())
}
