//! Python bindings: tensors, model config and weights, the data pipeline,
//! training, evaluation and the correlation / clustering statistics.

#![allow(clippy::useless_conversion)] // pyo3 0.22 macro expansion

use std::path::{Path, PathBuf};

use fate_core::analysis;
use fate_core::data::{self, FeatureOptions, PrepareOptions, TargetSpec, WindowedDataset};
use fate_core::model::{self, Checkpoint, FateWeights, ModelConfig, SoftmaxAxis};
use fate_core::train::{self, LrMode, TrainConfig};
use pyo3::create_exception;
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(fate, FateError, PyValueError);

fn err(e: fate_core::FateError) -> PyErr {
    FateError::new_err(format!("{}: {e}", e.code()))
}

/// Serializable report → plain Python dict/list via JSON.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_axis(axis: &str) -> PyResult<SoftmaxAxis> {
    match axis {
        "stations" => Ok(SoftmaxAxis::Stations),
        "time" => Ok(SoftmaxAxis::Time),
        other => Err(PyValueError::new_err(format!("softmax axis must be 'stations' or 'time', got {other:?}"))),
    }
}

fn axis_name(axis: SoftmaxAxis) -> &'static str {
    match axis {
        SoftmaxAxis::Stations => "stations",
        SoftmaxAxis::Time => "time",
    }
}

/// Dense row-major f64 tensor.
#[pyclass(name = "Tensor", module = "fate")]
#[derive(Clone)]
struct PyTensor(fate_core::Tensor);

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        fate_core::Tensor::new(&shape, data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> PyResult<Self> {
        fate_core::Tensor::zeros(&shape).map(Self).map_err(err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    fn tolist(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn get(&self, index: Vec<usize>) -> PyResult<f64> {
        self.0.get(&index).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.data().len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.0.shape())
    }
}

#[pyclass(name = "ModelConfig", module = "fate")]
#[derive(Clone)]
struct PyModelConfig(ModelConfig);

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (lag, stations, params, n_targets, *, num_heads=8, key_dim=32, dense_units=64, num_layers=1, softmax_axis="stations"))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        lag: usize,
        stations: usize,
        params: usize,
        n_targets: usize,
        num_heads: usize,
        key_dim: usize,
        dense_units: usize,
        num_layers: usize,
        softmax_axis: &str,
    ) -> PyResult<Self> {
        let cfg = ModelConfig {
            num_heads,
            key_dim,
            dense_units,
            num_layers,
            softmax_axis: parse_axis(softmax_axis)?,
            ..ModelConfig::new(lag, stations, params, n_targets)
        };
        cfg.validate().map_err(err)?;
        Ok(Self(cfg))
    }

    #[getter]
    fn lag(&self) -> usize {
        self.0.lag
    }

    #[getter]
    fn stations(&self) -> usize {
        self.0.stations
    }

    #[getter]
    fn params(&self) -> usize {
        self.0.params
    }

    #[getter]
    fn n_targets(&self) -> usize {
        self.0.n_targets
    }

    #[getter]
    fn num_heads(&self) -> usize {
        self.0.num_heads
    }

    #[getter]
    fn softmax_axis(&self) -> &'static str {
        axis_name(self.0.softmax_axis)
    }

    fn d_model(&self) -> usize {
        self.0.d_model()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.0)
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(lag={}, stations={}, params={}, n_targets={}, num_heads={}, key_dim={}, dense_units={}, num_layers={}, softmax_axis='{}')",
            self.0.lag,
            self.0.stations,
            self.0.params,
            self.0.n_targets,
            self.0.num_heads,
            self.0.key_dim,
            self.0.dense_units,
            self.0.num_layers,
            axis_name(self.0.softmax_axis)
        )
    }
}

#[pyclass(name = "Weights", module = "fate")]
#[derive(Clone)]
struct PyWeights(FateWeights);

#[pymethods]
impl PyWeights {
    #[staticmethod]
    #[pyo3(signature = (config, seed=0))]
    fn init(config: &PyModelConfig, seed: u64) -> PyResult<Self> {
        FateWeights::init(&config.0, seed).map(Self).map_err(err)
    }

    fn names(&self) -> Vec<String> {
        self.0.names()
    }

    fn tensor(&self, name: &str) -> PyResult<PyTensor> {
        self.0
            .named()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| PyTensor(t.clone()))
            .ok_or_else(|| PyIndexError::new_err(format!("no weight tensor named {name:?}")))
    }

    fn num_parameters(&self) -> usize {
        self.0.named().iter().map(|(_, t)| t.data().len()).sum()
    }

    fn save(&self, path: PathBuf, config: &PyModelConfig) -> PyResult<()> {
        let ckpt = Checkpoint {
            config: config.0.clone(),
            weights: self.0.clone(),
            metadata: Default::default(),
        };
        model::save_checkpoint(&path, &ckpt).map_err(err)
    }

    /// Returns `(config, weights)` from a checkpoint file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<(PyModelConfig, PyWeights)> {
        let ckpt = model::load_checkpoint(&path).map_err(err)?;
        Ok((PyModelConfig(ckpt.config), PyWeights(ckpt.weights)))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

/// Windowed samples with `T×S×P` inputs and one value per target.
#[pyclass(name = "Dataset", module = "fate")]
#[derive(Clone)]
struct PyDataset(WindowedDataset);

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn stations(&self) -> Vec<String> {
        self.0.stations.clone()
    }

    #[getter]
    fn features(&self) -> Vec<String> {
        self.0.features.clone()
    }

    #[getter]
    fn lag(&self) -> usize {
        self.0.lag
    }

    /// `(station, feature, horizon)` per target.
    #[getter]
    fn targets(&self) -> Vec<(String, String, usize)> {
        self.0
            .targets
            .iter()
            .map(|t| (t.station.clone(), t.feature.clone(), t.horizon))
            .collect()
    }

    /// `(x, target)` of sample `i`, target in scaled units.
    fn sample(&self, i: usize) -> PyResult<(PyTensor, Vec<f64>)> {
        let s = self
            .0
            .samples
            .get(i)
            .ok_or_else(|| PyIndexError::new_err(format!("sample {i} out of range")))?;
        Ok((PyTensor(s.x.clone()), s.target.clone()))
    }

    fn leakage_free(&self) -> bool {
        self.0.leakage_free()
    }
}

/// Output of [`prepare_wide`] / [`prepare_long`].
#[pyclass(name = "Prepared", module = "fate")]
struct PyPrepared(data::PreparedData);

#[pymethods]
impl PyPrepared {
    #[getter]
    fn dataset(&self) -> PyDataset {
        PyDataset(self.0.dataset.clone())
    }

    fn splits(&self) -> PyResult<(PyDataset, PyDataset, PyDataset)> {
        let (a, b, c) = self.0.splits().map_err(err)?;
        Ok((PyDataset(a), PyDataset(b), PyDataset(c)))
    }

    fn report(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.0.report)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::save_dataset(&path, &self.0, None).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        data::load_dataset(&path).map(|(d, _)| Self(d)).map_err(err)
    }
}

#[allow(clippy::too_many_arguments)]
fn prepare_from(
    outcome: data::LoadOutcome,
    coords: Option<&Path>,
    lag: usize,
    targets: Vec<(String, String, usize)>,
    train: usize,
    val: usize,
    test: Option<usize>,
    temporal: bool,
) -> PyResult<PyPrepared> {
    let coords = coords.map(data::load_coordinates).transpose().map_err(err)?;
    let opts = PrepareOptions {
        lag,
        targets: targets
            .into_iter()
            .map(|(station, feature, horizon)| TargetSpec {
                station,
                feature,
                horizon,
            })
            .collect(),
        train,
        val,
        test,
        features: FeatureOptions {
            cartesian: coords.is_some(),
            temporal,
        },
    };
    data::prepare(outcome, coords.as_ref(), &opts).map(PyPrepared).map_err(err)
}

/// Loads one wide CSV per feature (`[(feature, path), ...]`, a timestamp
/// column plus one column per station) and runs the full pipeline.
#[pyfunction]
#[pyo3(signature = (files, targets, lag, train, val, *, test=None, coords=None, temporal=true))]
#[allow(clippy::too_many_arguments)]
fn prepare_wide(
    files: Vec<(String, PathBuf)>,
    targets: Vec<(String, String, usize)>,
    lag: usize,
    train: usize,
    val: usize,
    test: Option<usize>,
    coords: Option<PathBuf>,
    temporal: bool,
) -> PyResult<PyPrepared> {
    let outcome = data::load_wide(&files).map_err(err)?;
    prepare_from(outcome, coords.as_deref(), lag, targets, train, val, test, temporal)
}

/// Same as [`prepare_wide`] for a single long CSV with a station column.
#[pyfunction]
#[pyo3(signature = (path, targets, lag, train, val, *, test=None, coords=None, temporal=true))]
#[allow(clippy::too_many_arguments)]
fn prepare_long(
    path: PathBuf,
    targets: Vec<(String, String, usize)>,
    lag: usize,
    train: usize,
    val: usize,
    test: Option<usize>,
    coords: Option<PathBuf>,
    temporal: bool,
) -> PyResult<PyPrepared> {
    let outcome = data::load_long(&path).map_err(err)?;
    prepare_from(outcome, coords.as_deref(), lag, targets, train, val, test, temporal)
}

/// Single-sample forward pass. Returns the prediction and, per layer, the
/// modulation tensor `Ã` of each head.
#[pyfunction]
fn forward(x: &PyTensor, weights: &PyWeights, config: &PyModelConfig) -> PyResult<(Vec<f64>, Vec<Vec<PyTensor>>)> {
    let (y, layers) = model::encoder_forward(&x.0, &weights.0, &config.0).map_err(err)?;
    let mods = layers
        .into_iter()
        .map(|l| l.heads.into_iter().map(|h| PyTensor(h.atilde)).collect())
        .collect();
    Ok((y.data().to_vec(), mods))
}

#[pyfunction]
fn predict(weights: &PyWeights, config: &PyModelConfig, xs: Vec<PyTensor>) -> PyResult<Vec<Vec<f64>>> {
    let refs: Vec<_> = xs.iter().map(|x| &x.0).collect();
    model::predict_batch(&weights.0, &config.0, &refs).map_err(err)
}

/// Trains from `weights` and returns `(best_weights, history)`.
/// `lr=None` uses the warmup schedule, a number fixes the learning rate.
#[pyfunction]
#[pyo3(signature = (config, weights, train_set, val_set, *, max_epochs=100, batch_size=64, patience=10, warmup_steps=400, seed=0, lr=None, max_steps=None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    config: &PyModelConfig,
    weights: &PyWeights,
    train_set: &PyDataset,
    val_set: &PyDataset,
    max_epochs: usize,
    batch_size: usize,
    patience: usize,
    warmup_steps: usize,
    seed: u64,
    lr: Option<f64>,
    max_steps: Option<usize>,
) -> PyResult<(PyWeights, PyObject)> {
    let tc = TrainConfig {
        max_epochs,
        batch_size,
        patience,
        warmup_steps,
        seed,
        lr_mode: lr.map_or(LrMode::Schedule, LrMode::Fixed),
        max_steps,
    };
    let out = py
        .allow_threads(|| train::train(&config.0, &weights.0, &train_set.0, &val_set.0, &tc))
        .map_err(err)?;
    Ok((PyWeights(out.weights), to_py(py, &out.history)?))
}

/// Per-target MAE and MSE in original units.
#[pyfunction]
fn evaluate(py: Python<'_>, weights: &PyWeights, config: &PyModelConfig, dataset: &PyDataset) -> PyResult<PyObject> {
    let ev = train::evaluate(&weights.0, &config.0, &dataset.0).map_err(err)?;
    to_py(py, &ev)
}

#[pyfunction]
fn mse(pred: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    train::mse(&pred, &actual).map_err(err)
}

#[pyfunction]
fn mae(pred: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    train::mae(&pred, &actual).map_err(err)
}

#[pyfunction]
fn lr_schedule(step: usize, d_model: usize, warmup: usize) -> PyResult<f64> {
    train::lr_schedule(step, d_model, warmup).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (seed=0, softmax_axis="stations"))]
fn gradient_check(py: Python<'_>, seed: u64, softmax_axis: &str) -> PyResult<PyObject> {
    let cfg = train::gradcheck_config(parse_axis(softmax_axis)?);
    let report = train::gradient_check(&cfg, seed, None).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    analysis::pearson(&a, &b).map_err(err)
}

/// Returns `(labels, matrix)`. With `lenient`, constant columns give NaN
/// entries instead of an error.
#[pyfunction]
#[pyo3(signature = (labels, columns, *, lenient=false))]
fn correlation_matrix(labels: Vec<String>, columns: Vec<Vec<f64>>, lenient: bool) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let m = if lenient {
        analysis::correlation_matrix_lenient(&labels, &columns)
    } else {
        analysis::correlation_matrix(&labels, &columns)
    }
    .map_err(err)?;
    Ok((m.labels, m.values))
}

#[pyfunction]
#[pyo3(signature = (points, k, *, max_iter=100, tol=0.0, seed=0, restarts=1))]
fn kmeans(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
    restarts: usize,
) -> PyResult<PyObject> {
    let r = analysis::kmeans_best_of(&points, k, max_iter, tol, seed, restarts).map_err(err)?;
    to_py(py, &r)
}

/// Per-head, per-station attention mass of encoder layer `layer`.
#[pyfunction]
#[pyo3(signature = (weights, config, dataset, layer=0))]
fn modulation_report(
    py: Python<'_>,
    weights: &PyWeights,
    config: &PyModelConfig,
    dataset: &PyDataset,
    layer: usize,
) -> PyResult<PyObject> {
    let r = analysis::modulation_report(&weights.0, &config.0, &dataset.0, layer).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn positional_encoding(lag: usize, stations: usize, params: usize) -> PyResult<PyTensor> {
    model::positional_encoding(lag, stations, params).map(PyTensor).map_err(err)
}

#[pymodule]
fn fate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FateError", m.py().get_type_bound::<FateError>())?;
    m.add_class::<PyTensor>()?;
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyWeights>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPrepared>()?;
    m.add_function(wrap_pyfunction!(prepare_wide, m)?)?;
    m.add_function(wrap_pyfunction!(prepare_long, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(lr_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(modulation_report, m)?)?;
    m.add_function(wrap_pyfunction!(positional_encoding, m)?)?;
    Ok(())
}
