//! Python bindings. Structured results (scores, histories, configs) cross the
//! boundary as plain dicts and lists via JSON.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use ivtsc::admm::{self, AdmmConfig};
use ivtsc::dgp::{LabeledDataset, Samples};
use ivtsc::harness::{self, csv_io, DgpChoice, SimulateSpec};
use ivtsc::imaging::{self, EmbeddingSpec, ImagingConfig, ThresholdSpec};
use ivtsc::interval;
use ivtsc::metrics;
use ivtsc::net::{Architecture, CnnModel, TrainConfig};

fn err(e: ivtsc::Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind());
    match e {
        ivtsc::Error::Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned + Default>(py: Python<'_>, value: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let Some(value) = value else {
        return Ok(T::default());
    };
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn imaging_config(nu: f64, eps: &str, m: usize, kappa: usize) -> PyResult<ImagingConfig> {
    let cfg = ImagingConfig {
        emb: EmbeddingSpec::new(m, kappa).map_err(err)?,
        thr: eps.parse().map_err(err)?,
        nu,
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

const DEFAULT_EPS: &str = "fixed:0.17453292519943295";

/// A labeled collection of interval-valued series.
#[pyclass(module = "ivtsc", skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    pub inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: csv_io::read_dataset_file(&path).map_err(err)?,
        })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        csv_io::write_dataset_file(&self.inner, &path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names.clone()
    }

    #[getter]
    fn series_len(&self) -> usize {
        self.inner.series_len()
    }

    #[getter]
    fn dims(&self) -> usize {
        self.inner.dims()
    }

    #[getter]
    fn is_multivariate(&self) -> bool {
        self.inner.is_multivariate()
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    /// `(lower, upper)` of sample `i`, each `T` long or `p x T`.
    fn bounds<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyAny>> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("sample {i} out of range")));
        }
        match &self.inner.samples {
            Samples::Univariate(s) => to_py(py, &(s[i].lower(), s[i].upper())),
            Samples::Multivariate(s) => to_py(py, &(s[i].lower(), s[i].upper())),
        }
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.inner.len()) {
            return Err(PyValueError::new_err(format!("sample {bad} out of range")));
        }
        Ok(Self {
            inner: self.inner.subset(&indices),
        })
    }

    /// Stratified `(train, eval)` index lists.
    fn split(&self, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        harness::stratified_split(&self.inner.labels(), self.inner.classes, fraction, seed)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(samples={}, classes={}, length={}, dims={})",
            self.inner.len(),
            self.inner.classes,
            self.inner.series_len(),
            self.inner.dims()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (dgp, rhos, per_class, length, seed = 0))]
fn simulate(dgp: &str, rhos: Vec<f64>, per_class: usize, length: usize, seed: u64) -> PyResult<Dataset> {
    let spec = SimulateSpec {
        dgp: dgp.parse::<DgpChoice>().map_err(err)?,
        rhos,
        per_class,
        length,
        options: Default::default(),
    };
    Ok(Dataset {
        inner: spec.build(seed).map_err(err)?,
    })
}

#[pyfunction]
fn combine(lower: Vec<f64>, upper: Vec<f64>, alpha: Vec<f64>) -> PyResult<Vec<f64>> {
    interval::combine(&lower, &upper, &alpha).map_err(err)
}

fn rows(size: usize, values: &[f64]) -> Vec<Vec<f64>> {
    values.chunks(size).map(<[f64]>::to_vec).collect()
}

/// Recurrence plot of a series as a list of rows; hard when `nu` is None.
#[pyfunction]
#[pyo3(signature = (series, m = 1, kappa = 1, eps = DEFAULT_EPS, nu = None))]
fn rp(series: Vec<f64>, m: usize, kappa: usize, eps: &str, nu: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
    let emb = EmbeddingSpec::new(m, kappa).map_err(err)?;
    let thr: ThresholdSpec = eps.parse().map_err(err)?;
    let img = imaging::rp(&series, &emb, &thr, nu).map_err(err)?;
    Ok(rows(img.size(), img.values()))
}

/// Joint recurrence plot of a `p x T` matrix with one threshold shared by all dimensions.
#[pyfunction]
#[pyo3(signature = (matrix, m = 1, kappa = 1, eps = DEFAULT_EPS, nu = None))]
fn jrp(matrix: Vec<Vec<f64>>, m: usize, kappa: usize, eps: &str, nu: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
    let emb = EmbeddingSpec::new(m, kappa).map_err(err)?;
    let thr: ThresholdSpec = eps.parse().map_err(err)?;
    let img = imaging::jrp(&matrix, &emb, &vec![thr; matrix.len()], nu).map_err(err)?;
    Ok(rows(img.size(), img.values()))
}

/// The ten classification scores plus `degenerate_labels`.
#[pyfunction]
fn scores<'py>(py: Python<'py>, truth: Vec<usize>, pred: Vec<usize>, classes: usize) -> PyResult<Bound<'py, PyAny>> {
    let s = metrics::scores(&metrics::confusion(&truth, &pred, classes).map_err(err)?).map_err(err)?;
    let out = to_py(py, &s)?;
    out.set_item("degenerate_labels", s.degenerate_labels)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (seed = 0, trials = 100))]
fn gradcheck<'py>(py: Python<'py>, seed: u64, trials: usize) -> PyResult<Bound<'py, PyAny>> {
    let report = ivtsc::gradcheck::run(seed, trials).map_err(err)?;
    let out = to_py(py, &report)?;
    out.set_item("passed", report.passed())?;
    Ok(out)
}

/// A trained convolutional classifier over recurrence images.
#[pyclass(module = "ivtsc", skip_from_py_object)]
#[derive(Clone)]
pub struct Model {
    pub inner: CnnModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: harness::load_model(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        harness::save_model(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.inner.input_size()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.inner.classes()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Class index for an image given as a list of rows.
    fn predict(&self, image: Vec<Vec<f64>>) -> PyResult<usize> {
        let flat: Vec<f64> = image.concat();
        self.inner.predict(&flat).map_err(err)
    }

    /// Scores on `data` imaged with coefficients `alpha`.
    #[pyo3(signature = (data, alpha, nu = 10.0, eps = DEFAULT_EPS, m = 1, kappa = 1))]
    #[allow(clippy::too_many_arguments)]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        data: &Dataset,
        alpha: Vec<f64>,
        nu: f64,
        eps: &str,
        m: usize,
        kappa: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let imaging = imaging_config(nu, eps, m, kappa)?;
        let report = harness::evaluate(&self.inner, &data.inner, &alpha, &imaging).map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(input_size={}, classes={}, parameters={})",
            self.inner.input_size(),
            self.inner.classes(),
            self.inner.parameter_count()
        )
    }
}

/// Jointly trains a network and combination coefficients with ADMM.
///
/// `imaging`, `admm`, `train` and `architecture` take the same dicts as the
/// JSON config of the command line tool. Returns a dict with `model`, `beta`,
/// `alpha`, `history` and `train_loss`.
#[pyfunction]
#[pyo3(signature = (data, imaging = None, admm = None, train = None, architecture = None, seed = 0))]
fn train<'py>(
    py: Python<'py>,
    data: &Dataset,
    imaging: Option<&Bound<'py, PyAny>>,
    admm: Option<&Bound<'py, PyAny>>,
    train: Option<&Bound<'py, PyAny>>,
    architecture: Option<&Bound<'py, PyAny>>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let imaging: ImagingConfig = from_py(py, imaging)?;
    let cfg: AdmmConfig = from_py(py, admm)?;
    let net = TrainConfig {
        seed,
        ..from_py(py, train)?
    };
    let arch: Architecture = from_py(py, architecture)?;
    imaging.validate().map_err(err)?;
    let outcome = py
        .detach(|| admm::train(&data.inner, &imaging, &arch, &net, &cfg))
        .map_err(err)?;
    let out = pyo3::types::PyDict::new(py);
    out.set_item("beta", &outcome.beta)?;
    out.set_item("alpha", &outcome.alpha)?;
    out.set_item("history", to_py(py, &outcome.history)?)?;
    out.set_item("train_loss", outcome.train_loss)?;
    out.set_item("model", Model { inner: outcome.model })?;
    Ok(out.into_any())
}

#[pymodule]
#[pyo3(name = "ivtsc")]
pub fn ivtsc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(combine, m)?)?;
    m.add_function(wrap_pyfunction!(rp, m)?)?;
    m.add_function(wrap_pyfunction!(jrp, m)?)?;
    m.add_function(wrap_pyfunction!(scores, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
