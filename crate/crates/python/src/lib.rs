//! Python bindings for the relapse-detect core crate.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use relapse_detect::eval;
use relapse_detect::features::spectral::{self, Bands, WelchConfig};
use relapse_detect::iforest::{self, ForestModel, ForestParams};
use relapse_detect::preprocess::{self, HampelConfig};
use relapse_detect::synthgen::{self, GenConfig};
use relapse_detect::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn welch_config(segment_len: usize, overlap: f64) -> PyResult<WelchConfig> {
    if segment_len < 2 || !(0.0..1.0).contains(&overlap) {
        return Err(PyValueError::new_err("segment_len must be >= 2 and overlap in [0, 1)"));
    }
    Ok(WelchConfig { segment_len, overlap })
}

/// Hampel filter over `values` (NaN marks a missing sample). Returns a dict
/// with the cleaned values and replacement counts.
#[pyfunction]
#[pyo3(signature = (values, half_width, n_sigmas=3.0, impute_quorum=None))]
fn hampel<'py>(
    py: Python<'py>,
    values: Vec<f64>,
    half_width: usize,
    n_sigmas: f64,
    impute_quorum: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = HampelConfig::new(half_width);
    cfg.n_sigmas = n_sigmas;
    if let Some(q) = impute_quorum {
        cfg.impute_quorum = q;
    }
    let out = preprocess::hampel_filter(&values, &cfg);
    let d = PyDict::new(py);
    d.set_item("values", out.values)?;
    d.set_item("replaced", out.replaced)?;
    d.set_item("imputed", out.imputed)?;
    d.set_item("still_missing", out.still_missing)?;
    Ok(d)
}

/// Welch power spectral density; returns `(freqs, power)`.
#[pyfunction]
#[pyo3(signature = (x, fs, segment_len=256, overlap=0.5))]
fn welch_psd(x: Vec<f64>, fs: f64, segment_len: usize, overlap: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let psd = spectral::welch_psd(&x, fs, welch_config(segment_len, overlap)?);
    Ok((psd.freqs, psd.power))
}

/// LF and HF band powers of `x` with their fractions (None when both are 0).
#[pyfunction]
#[pyo3(signature = (x, fs, segment_len=256, overlap=0.5))]
fn band_powers<'py>(
    py: Python<'py>,
    x: Vec<f64>,
    fs: f64,
    segment_len: usize,
    overlap: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let psd = spectral::welch_psd(&x, fs, welch_config(segment_len, overlap)?);
    let bp = spectral::band_powers(&psd, &Bands::default());
    let d = PyDict::new(py);
    d.set_item("lf_power", bp.lf_power)?;
    d.set_item("hf_power", bp.hf_power)?;
    d.set_item("fractions", bp.fractions)?;
    Ok(d)
}

/// ROC-AUC with midrank ties; None when one class is absent.
#[pyfunction]
fn roc_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(eval::roc_auc(&scores, &labels))
}

/// Average precision with tied scores grouped; None without positives.
#[pyfunction]
fn pr_auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(eval::pr_auc(&scores, &labels))
}

/// Average unsuccessful-search path length c(n) of a binary search tree.
#[pyfunction]
fn avg_path_length(n: usize) -> f64 {
    iforest::avg_path_length_c(n)
}

/// Writes a synthetic cohort under `root`; returns the ground truth as JSON.
#[pyfunction]
#[pyo3(signature = (root, n_subjects=10, n_days=180, seed=42, relapse_fraction=0.1))]
fn generate(root: PathBuf, n_subjects: usize, n_days: usize, seed: u64, relapse_fraction: f64) -> PyResult<String> {
    let cfg = GenConfig {
        n_subjects,
        n_days,
        seed,
        relapse_fraction,
        ..GenConfig::default()
    };
    let truth = synthgen::write_dataset(&cfg, &root).map_err(to_py)?;
    serde_json::to_string(&truth).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "IsolationForest", module = "relapse_detect_py")]
struct PyIsolationForest {
    params: ForestParams,
    model: Option<ForestModel>,
}

impl PyIsolationForest {
    fn fitted(&self) -> PyResult<&ForestModel> {
        self.model
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("model is not fitted"))
    }
}

#[pymethods]
impl PyIsolationForest {
    #[new]
    #[pyo3(signature = (n_trees=100, psi=256, seed=0))]
    fn new(n_trees: usize, psi: usize, seed: u64) -> Self {
        PyIsolationForest {
            params: ForestParams { n_trees, psi, seed },
            model: None,
        }
    }

    /// Fits on row-major data; columns default to `x0, x1, ...`.
    #[pyo3(signature = (rows, columns=None))]
    fn fit(&mut self, rows: Vec<Vec<f64>>, columns: Option<Vec<String>>) -> PyResult<()> {
        let width = rows.first().map_or(0, |r| r.len());
        let columns = columns.unwrap_or_else(|| (0..width).map(|i| format!("x{i}")).collect());
        self.model = Some(iforest::fit_rows(&rows, columns, self.params).map_err(to_py)?);
        Ok(())
    }

    /// Anomaly scores in (0, 1]; higher is more anomalous.
    fn score(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.fitted()?.score_rows(&rows).map_err(to_py)
    }

    fn expected_path_length(&self, row: Vec<f64>) -> PyResult<f64> {
        self.fitted()?.expected_path_length(&row).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.fitted()?.to_json().map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let model = ForestModel::from_json(text).map_err(to_py)?;
        Ok(PyIsolationForest {
            params: ForestParams {
                n_trees: model.meta.n_trees,
                psi: model.meta.psi,
                seed: model.meta.seed,
            },
            model: Some(model),
        })
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.params.n_trees
    }

    #[getter]
    fn psi(&self) -> usize {
        self.params.psi
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.model.as_ref().map_or_else(Vec::new, |m| m.meta.columns.clone())
    }
}

#[pymodule]
fn relapse_detect_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(hampel, m)?)?;
    m.add_function(wrap_pyfunction!(welch_psd, m)?)?;
    m.add_function(wrap_pyfunction!(band_powers, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(pr_auc, m)?)?;
    m.add_function(wrap_pyfunction!(avg_path_length, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_class::<PyIsolationForest>()?;
    Ok(())
}
