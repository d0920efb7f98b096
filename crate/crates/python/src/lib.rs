//! Python bindings: feature extraction, classifiers, neural presets and
//! evaluation helpers. Arrays cross the boundary as nested sequences of
//! floats (lists or NumPy arrays); model specs and saved models as JSON.

use std::path::PathBuf;

use instrclass::dataset::{build_balanced_subset, load_metadata, Split};
use instrclass::dsp::wav::{read_wav, WavOptions};
use instrclass::dsp::{AudioClip, StftConfig, Window};
use instrclass::evaluation::{confusion_matrix, fit_model, fit_power_curve, per_class_metrics, ModelSpec, TrainedModel};
use instrclass::features::{feature_names, harmonic_percussive_index, FeatureExtractor};
use instrclass::neural::NeuralData;
use ndarray::{Array2, ArrayD, IxDyn};
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

pyo3::create_exception!(instrclass, InstrclassError, PyException, "Any failure reported by the instrclass core.");

fn to_py(e: instrclass::Error) -> PyErr {
    match e {
        instrclass::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => InstrclassError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Rows of equal length as a matrix.
fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(PyValueError::new_err(format!("row {i} has {} values, expected {d}", r.len())));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Short-time analysis settings.
#[pyclass(name = "StftConfig", from_py_object)]
#[derive(Clone)]
struct PyStftConfig {
    inner: StftConfig,
}

#[pymethods]
impl PyStftConfig {
    #[new]
    #[pyo3(signature = (frame_len = 2048, hop = 512, fft_len = 2048, window = "hann", pre_emphasis = 0.97))]
    fn new(frame_len: usize, hop: usize, fft_len: usize, window: &str, pre_emphasis: f64) -> PyResult<Self> {
        let window = match window {
            "hann" => Window::Hann,
            "hamming" => Window::Hamming,
            "rectangular" => Window::Rectangular,
            other => return Err(PyValueError::new_err(format!("unknown window {other:?}"))),
        };
        let inner = StftConfig { frame_len, hop, window, fft_len, pre_emphasis };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn frame_len(&self) -> usize {
        self.inner.frame_len
    }

    #[getter]
    fn hop(&self) -> usize {
        self.inner.hop
    }

    #[getter]
    fn fft_len(&self) -> usize {
        self.inner.fft_len
    }

    fn __repr__(&self) -> String {
        format!(
            "StftConfig(frame_len={}, hop={}, fft_len={}, pre_emphasis={})",
            self.inner.frame_len, self.inner.hop, self.inner.fft_len, self.inner.pre_emphasis
        )
    }
}

fn stft(config: Option<PyStftConfig>) -> StftConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

/// Reads a mono 16-bit WAV file as `(samples, sample_rate)`.
#[pyfunction]
#[pyo3(signature = (path, expected_rate = 16000, allow_any_rate = false))]
fn load_wav(path: PathBuf, expected_rate: u32, allow_any_rate: bool) -> PyResult<(Vec<f64>, u32)> {
    let clip = read_wav(&path, &WavOptions { expected_rate, allow_any_rate }).map_err(to_py)?;
    Ok((clip.samples, clip.sample_rate))
}

/// The 168-value feature row of one clip.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, config = None))]
fn extract_features(py: Python<'_>, samples: Vec<f64>, sample_rate: u32, config: Option<PyStftConfig>) -> PyResult<Vec<f64>> {
    let cfg = stft(config);
    py.detach(|| {
        let extractor = FeatureExtractor::new(cfg, sample_rate)?;
        extractor.extract(&AudioClip::new(samples, sample_rate)).map(|v| v.0)
    })
    .map_err(to_py)
}

/// Column names of the feature row, in order.
#[pyfunction(name = "feature_names")]
fn py_feature_names() -> Vec<String> {
    feature_names()
}

/// Harmonic share of the clip's power after harmonic/percussive separation.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, config = None))]
fn hpi(py: Python<'_>, samples: Vec<f64>, sample_rate: u32, config: Option<PyStftConfig>) -> PyResult<f64> {
    let cfg = stft(config);
    py.detach(|| harmonic_percussive_index(&AudioClip::new(samples, sample_rate), &cfg)).map_err(to_py)
}

/// File ids of a class-balanced subset of an NSynth `examples.json`.
#[pyfunction]
fn balanced_subset(metadata_path: PathBuf, per_class: usize, seed: u64) -> PyResult<Vec<String>> {
    let records = load_metadata(&metadata_path, Split::infer_from_path(&metadata_path).unwrap_or(Split::Train)).map_err(to_py)?;
    let m = build_balanced_subset(&records, per_class, seed).map_err(to_py)?;
    Ok(m.records.into_iter().map(|r| r.file_id).collect())
}

/// A trainable model described by a JSON spec such as
/// `{"model": "random_forest", "n_trees": 100}`.
///
/// Classical models and flat neural presets take `x` as rows of
/// features; image presets take `x` as `[n, channels, height, width]`
/// nested lists, passed with `shape`.
#[pyclass(name = "Classifier")]
struct PyClassifier {
    spec: ModelSpec,
    model: Option<TrainedModel>,
}

fn inputs(x: Vec<f64>, shape: Option<Vec<usize>>, flat_rows: Option<Vec<Vec<f64>>>) -> PyResult<Vec<ArrayD<f64>>> {
    match (flat_rows, shape) {
        (Some(r), _) => Ok(vec![matrix(r)?.into_dyn()]),
        (None, Some(shape)) => ArrayD::from_shape_vec(IxDyn(&shape), x)
            .map(|a| vec![a])
            .map_err(|e| PyValueError::new_err(e.to_string())),
        (None, None) => Err(PyValueError::new_err("flat input needs a shape")),
    }
}

/// Accepts either rows of floats or a flat buffer with an explicit shape.
fn extract_x(x: &Bound<'_, PyAny>, shape: Option<Vec<usize>>) -> PyResult<Vec<ArrayD<f64>>> {
    match shape {
        Some(s) => inputs(x.extract()?, Some(s), None),
        None => inputs(Vec::new(), None, Some(x.extract()?)),
    }
}

impl PyClassifier {
    fn fitted(&self) -> PyResult<&TrainedModel> {
        self.model.as_ref().ok_or_else(|| InstrclassError::new_err("model is not fitted"))
    }
}

#[pymethods]
impl PyClassifier {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(spec_json).map_err(json_err)?;
        Ok(Self { spec, model: None })
    }

    /// Restores a model saved with `to_json`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        #[derive(serde::Deserialize)]
        struct Saved {
            spec: ModelSpec,
            model: TrainedModel,
        }
        let saved: Saved = serde_json::from_str(text).map_err(json_err)?;
        Ok(Self { spec: saved.spec, model: Some(saved.model) })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&serde_json::json!({ "spec": self.spec, "model": self.fitted()? })).map_err(json_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.spec.name()
    }

    #[getter]
    fn spec_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.spec).map_err(json_err)
    }

    #[getter]
    fn is_fitted(&self) -> bool {
        self.model.is_some()
    }

    /// Trains on `(x, y)`; returns notes such as a capped SVM solve.
    /// `valid` is an optional `(x, y)` pair used for early stopping.
    #[pyo3(signature = (x, y, n_classes = None, seed = 0, shape = None, valid = None))]
    fn fit(
        &mut self,
        py: Python<'_>,
        x: &Bound<'_, PyAny>,
        y: Vec<usize>,
        n_classes: Option<usize>,
        seed: u64,
        shape: Option<Vec<usize>>,
        valid: Option<(Bound<'_, PyAny>, Vec<usize>)>,
    ) -> PyResult<Vec<String>> {
        let k = n_classes.unwrap_or_else(|| y.iter().max().map_or(0, |m| m + 1));
        let train = NeuralData::new(extract_x(x, shape.clone())?, y).map_err(to_py)?;
        let valid = match valid {
            Some((vx, vy)) => {
                let vshape = shape.map(|mut s| {
                    s[0] = vy.len();
                    s
                });
                Some(NeuralData::new(extract_x(&vx, vshape)?, vy).map_err(to_py)?)
            }
            None => None,
        };
        let spec = self.spec.clone();
        let (model, notes) = py.detach(|| fit_model(&spec, &train, valid.as_ref(), k, seed)).map_err(to_py)?;
        self.model = Some(model);
        Ok(notes)
    }

    #[pyo3(signature = (x, shape = None))]
    fn predict_proba(&self, py: Python<'_>, x: &Bound<'_, PyAny>, shape: Option<Vec<usize>>) -> PyResult<Vec<Vec<f64>>> {
        let x = extract_x(x, shape)?;
        let model = self.fitted()?;
        py.detach(|| model.predict_proba(&x)).map(|p| rows(&p)).map_err(to_py)
    }

    #[pyo3(signature = (x, shape = None))]
    fn predict(&self, py: Python<'_>, x: &Bound<'_, PyAny>, shape: Option<Vec<usize>>) -> PyResult<Vec<usize>> {
        let x = extract_x(x, shape)?;
        let model = self.fitted()?;
        py.detach(|| model.predict(&x)).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Classifier({:?}, fitted={})", self.spec.name(), self.model.is_some())
    }
}

/// Raw counts, rows true class, columns predicted class.
#[pyfunction(name = "confusion_matrix")]
fn py_confusion_matrix(y_true: Vec<usize>, y_pred: Vec<usize>, n_classes: usize) -> PyResult<Vec<Vec<u64>>> {
    let cm = confusion_matrix(&y_true, &y_pred, n_classes).map_err(to_py)?;
    Ok(cm.counts.rows().into_iter().map(|r| r.to_vec()).collect())
}

/// Accuracy, macro averages and one-vs-rest metrics per class.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, y_true: Vec<usize>, y_pred: Vec<usize>, n_classes: usize) -> PyResult<Bound<'py, PyDict>> {
    let cm = confusion_matrix(&y_true, &y_pred, n_classes).map_err(to_py)?;
    let r = per_class_metrics(&cm).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("accuracy", r.accuracy)?;
    out.set_item("macro_precision", r.macro_precision)?;
    out.set_item("macro_recall", r.macro_recall)?;
    out.set_item("macro_f_measure", r.macro_f_measure)?;
    out.set_item("micro_recall", r.micro_recall)?;
    let per_class = r
        .per_class
        .iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("tp", m.tp)?;
            d.set_item("fp", m.fp)?;
            d.set_item("fn", m.fn_)?;
            d.set_item("tn", m.tn)?;
            d.set_item("precision", m.precision)?;
            d.set_item("recall", m.recall)?;
            d.set_item("f_measure", m.f_measure)?;
            d.set_item("fp_rate", m.fp_rate)?;
            d.set_item("undefined", m.undefined.clone())?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    out.set_item("per_class", per_class)?;
    Ok(out)
}

/// `(a, b, r_squared_log)` of `accuracy ≈ a · size^b`.
#[pyfunction]
fn power_fit(sizes: Vec<f64>, accuracies: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if sizes.len() != accuracies.len() {
        return Err(PyValueError::new_err("sizes and accuracies differ in length"));
    }
    let pts: Vec<(f64, f64)> = sizes.into_iter().zip(accuracies).collect();
    let f = fit_power_curve(&pts).map_err(to_py)?;
    Ok((f.a, f.b, f.r_squared_log))
}

#[pymodule(name = "instrclass")]
fn instrclass_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("InstrclassError", m.py().get_type::<InstrclassError>())?;
    m.add("FEATURE_LEN", instrclass::features::FEATURE_LEN)?;
    m.add_class::<PyStftConfig>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(load_wav, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(py_feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(hpi, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_subset, m)?)?;
    m.add_function(wrap_pyfunction!(py_confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(power_fit, m)?)?;
    Ok(())
}
