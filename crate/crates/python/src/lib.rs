//! Python bindings for the semreduce pipeline: scene generation, label
//! remapping, steering prediction, and Grad-CAM attribution.

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;

use semreduce_core::analysis;
use semreduce_core::checkpoint::Checkpoint;
use semreduce_core::models::{steer_input, SteerNetConfig};
use semreduce_core::scenegen::{self, GeneratorConfig, SceneParams, Weather};
use semreduce_core::semantics::{Label, LabelSetKind, RemapTable};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A grid of semantic label ids (13-class full set or 7-class compact set).
#[pyclass(name = "SemanticMap")]
#[derive(Clone)]
struct PySemanticMap {
    inner: semreduce_core::semantics::SemanticMap,
}

#[pymethods]
impl PySemanticMap {
    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    /// "full13" or "compact7".
    #[getter]
    fn label_set(&self) -> &'static str {
        match self.inner.kind() {
            LabelSetKind::Full13 => "full13",
            LabelSetKind::Compact7 => "compact7",
        }
    }

    /// Label id at (row, col).
    fn get(&self, y: usize, x: usize) -> PyResult<u8> {
        if y >= self.inner.height() || x >= self.inner.width() {
            return Err(PyIndexError::new_err(format!("({y}, {x}) out of range")));
        }
        Ok(self.inner.get(y, x))
    }

    /// Row-major label ids.
    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    /// Pixel count per label id.
    fn label_counts(&self) -> Vec<usize> {
        self.inner.label_counts()
    }

    /// Apply the 13-to-7 label reduction; already-compact maps pass through.
    fn remap(&self) -> PySemanticMap {
        PySemanticMap { inner: self.inner.remap(RemapTable::table1()) }
    }

    /// One-hot encode to (channels, height, width, flat row-major values).
    fn one_hot(&self) -> (usize, usize, usize, Vec<f64>) {
        let oh = self.inner.one_hot();
        let t = oh.tensor();
        let shape = t.shape().to_vec();
        (shape[0], shape[1], shape[2], t.to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "SemanticMap({}x{}, {})",
            self.inner.height(),
            self.inner.width(),
            self.label_set()
        )
    }
}

/// A generated scene: semantic map, RGB rendering, steering ground truth.
#[pyclass(name = "Scene")]
struct PyScene {
    inner: scenegen::Scene,
}

#[pymethods]
impl PyScene {
    #[getter]
    fn steering(&self) -> f64 {
        self.inner.steering
    }

    #[getter]
    fn curvature(&self) -> f64 {
        self.inner.params.curvature
    }

    #[getter]
    fn offset(&self) -> f64 {
        self.inner.params.offset
    }

    #[getter]
    fn weather(&self) -> &'static str {
        self.inner.params.weather.name()
    }

    fn semantic(&self) -> PySemanticMap {
        PySemanticMap { inner: self.inner.semantic.clone() }
    }

    /// RGB rendering as (height, width, interleaved bytes).
    fn rgb(&self) -> (usize, usize, Vec<u8>) {
        (self.inner.rgb.height(), self.inner.rgb.width(), self.inner.rgb.data().to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scene(steering={:.4}, weather={})",
            self.inner.steering,
            self.inner.params.weather.name()
        )
    }
}

/// The steering CNN, constructed fresh or loaded from a checkpoint.
/// A model instance is a single-threaded unit of work on the Rust side,
/// hence unsendable.
#[pyclass(name = "SteerNet", unsendable)]
struct PySteerNet {
    inner: semreduce_core::models::SteerNet,
}

#[pymethods]
impl PySteerNet {
    /// Initialize from a preset name: steernet-rgb, steernet-seg13 or
    /// steernet-seg7.
    #[staticmethod]
    #[pyo3(signature = (preset, height=64, width=96, seed=0))]
    fn new(preset: &str, height: usize, width: usize, seed: u64) -> PyResult<PySteerNet> {
        let config = SteerNetConfig::preset(preset, height, width)
            .ok_or_else(|| value_err(format!("unknown preset {preset:?}")))?;
        Ok(PySteerNet {
            inner: semreduce_core::models::SteerNet::init(config, seed).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<PySteerNet> {
        let ckpt = Checkpoint::read(std::path::Path::new(path)).map_err(value_err)?;
        Ok(PySteerNet {
            inner: semreduce_core::models::SteerNet::from_checkpoint(&ckpt).map_err(value_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.to_checkpoint().write(std::path::Path::new(path)).map_err(value_err)
    }

    #[getter]
    fn preset(&self) -> &'static str {
        self.inner.config.model_id()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.config.channels
    }

    /// Steering prediction in (-1, 1) for a semantic map (one-hot input).
    fn predict(&self, map: &PySemanticMap) -> PyResult<f64> {
        let x = map.inner.one_hot().into_tensor();
        self.inner.predict(&x).map_err(value_err)
    }

    /// Steering prediction for a scene, using whichever input encoding the
    /// model was configured for.
    fn predict_scene(&self, scene: &PyScene) -> PyResult<f64> {
        let x = steer_input(&scene.inner, self.inner.config.channels).map_err(value_err)?;
        self.inner.predict(&x).map_err(value_err)
    }

    /// Grad-CAM heatmap for a scene as (height, width, flat values in [0,1]).
    #[pyo3(signature = (scene, layer=7))]
    fn grad_cam(&self, scene: &PyScene, layer: usize) -> PyResult<(usize, usize, Vec<f64>)> {
        let x = steer_input(&scene.inner, self.inner.config.channels).map_err(value_err)?;
        let cam = analysis::grad_cam(&self.inner, &x, layer, false).map_err(value_err)?;
        Ok((cam.height(), cam.width(), cam.values().to_vec()))
    }

    fn __repr__(&self) -> String {
        format!(
            "SteerNet(preset={}, {}x{})",
            self.preset(),
            self.inner.config.height,
            self.inner.config.width
        )
    }
}

/// Generate one scene deterministically from its parameters.
#[pyfunction]
#[pyo3(signature = (seed, curvature=0.0, offset=0.0, weather="sunny", height=64, width=96))]
fn generate_scene(
    seed: u64,
    curvature: f64,
    offset: f64,
    weather: &str,
    height: usize,
    width: usize,
) -> PyResult<PyScene> {
    let weather = Weather::from_name(weather)
        .ok_or_else(|| value_err(format!("unknown weather {weather:?} (sunny or rainy)")))?;
    let params = SceneParams { curvature, offset, seed, weather, height, width };
    let config = GeneratorConfig { height, width, ..GeneratorConfig::default() };
    Ok(PyScene { inner: scenegen::generate_scene(&params, &config).map_err(value_err)? })
}

/// Label id a full-set label maps to under the 13-to-7 reduction.
#[pyfunction]
fn remap_label(label_id: u8) -> PyResult<u8> {
    RemapTable::table1().remap_label(label_id).map_err(value_err)
}

/// Name of a full-set label id.
#[pyfunction]
fn label_name(label_id: u8) -> PyResult<&'static str> {
    Label::from_id(label_id)
        .map(Label::name)
        .ok_or_else(|| value_err(format!("label id {label_id} out of range")))
}

/// Full-set id of a label name.
#[pyfunction]
fn label_id(name: &str) -> PyResult<u8> {
    Label::from_name(name)
        .map(Label::id)
        .ok_or_else(|| value_err(format!("unknown label {name:?}")))
}

/// Steering in [-1, 1] to degrees at the wheel (70 degrees at 1.0).
#[pyfunction]
fn steering_to_degrees(steering: f64) -> PyResult<f64> {
    scenegen::steering_to_degrees(steering).map_err(value_err)
}

/// Per-label error increase when that label's channel is zeroed, over the
/// test split of a dataset directory. Returns (label, delta_mse) pairs in
/// descending delta order.
#[pyfunction]
fn sensitivity_scan(checkpoint: &str, dataset_dir: &str) -> PyResult<Vec<(String, f64)>> {
    let ckpt = Checkpoint::read(std::path::Path::new(checkpoint)).map_err(value_err)?;
    let net = semreduce_core::models::SteerNet::from_checkpoint(&ckpt).map_err(value_err)?;
    let dataset = scenegen::load_dataset(std::path::Path::new(dataset_dir)).map_err(value_err)?;
    let report = analysis::sensitivity_scan(
        &net,
        &dataset,
        scenegen::Split::Test,
        analysis::AblationMode::Zero,
    )
    .map_err(value_err)?;
    Ok(report.entries.into_iter().map(|e| (e.label, e.delta_mse)).collect())
}

#[pymodule]
fn semreduce(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySemanticMap>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PySteerNet>()?;
    m.add_function(wrap_pyfunction!(generate_scene, m)?)?;
    m.add_function(wrap_pyfunction!(remap_label, m)?)?;
    m.add_function(wrap_pyfunction!(label_name, m)?)?;
    m.add_function(wrap_pyfunction!(label_id, m)?)?;
    m.add_function(wrap_pyfunction!(steering_to_degrees, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity_scan, m)?)?;
    m.add("MAX_STEERING_DEGREES", scenegen::MAX_STEERING_DEGREES)?;
    m.add("LABEL_COUNT", Label::COUNT)?;
    Ok(())
}
