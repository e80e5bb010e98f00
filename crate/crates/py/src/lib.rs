//! Python bindings. Array data crosses as lists of floats; configs and
//! results cross as plain dicts with the same layout as the JSON files the
//! CLI writes.

use std::path::PathBuf;

use eegstage::classify::{
    channel_combination_search, confusion_metrics, ClassifierKind, SearchConfig, SearchStrategy,
};
use eegstage::features::{assemble_dataset, FeatureConfig};
use eegstage::ingest;
use eegstage::pipeline::{band_selection, FilteredSubject, Subject};
use eegstage::preprocess::{butter_bandpass_zero_phase, notch_50_q, PreprocessConfig};
use eegstage::spectral::{BandSelectionConfig, StftConfig};
use eegstage::synth::{generate_preset, Preset, SynthSetup};
use eegstage::wavelet::{dwt_decompose, dwt_reconstruct, DwtCoeffs, WaveletSpec};
use eegstage::{Band, ComparisonStage, Condition};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn to_py_err(e: eegstage::Error) -> PyErr {
    match e {
        eegstage::Error::Parameter(_) => PyValueError::new_err(e.to_string()),
        eegstage::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for eegstage::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

fn to_dict<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Deserialises an optional dict (missing keys take their defaults).
fn from_dict<T: DeserializeOwned + Default>(
    py: Python<'_>,
    value: Option<&Bound<'_, PyDict>>,
) -> PyResult<T> {
    let Some(value) = value else {
        return Ok(T::default());
    };
    let text: String = py
        .import("json")?
        .call_method1("dumps", (value,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))
}

fn parse<T: std::str::FromStr<Err = eegstage::Error>>(s: &str) -> PyResult<T> {
    s.parse().or_py()
}

/// One session: trials x channels x samples in microvolts.
#[pyclass(module = "pyeegstage", name = "Recording")]
pub struct PyRecording {
    inner: eegstage::Recording,
}

#[pymethods]
impl PyRecording {
    /// Loads a session from its manifest.json path.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyRecording {
            inner: ingest::load_recording(path).or_py()?,
        })
    }

    /// Writes manifest.json plus one CSV per trial into `dir`.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        ingest::save_recording(&self.inner, dir).or_py().map(|_| ())
    }

    #[getter]
    fn subject_id(&self) -> String {
        self.inner.subject_id.clone()
    }

    /// "2D" or "3D".
    #[getter]
    fn condition(&self) -> String {
        self.inner.condition.short().to_uppercase()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate
    }

    #[getter]
    fn channels(&self) -> Vec<String> {
        self.inner.montage.channels().to_vec()
    }

    #[getter]
    fn n_trials(&self) -> usize {
        self.inner.trials.len()
    }

    /// Samples of trial `index` as a list of channel rows.
    fn trial(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        let t = self
            .inner
            .trials
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("trial {index} out of range")))?;
        Ok(t.samples.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Structural errors, warnings and artifact counts.
    #[pyo3(signature = (artifact_threshold_uv = ingest::DEFAULT_ARTIFACT_THRESHOLD_UV))]
    fn validate(&self, py: Python<'_>, artifact_threshold_uv: f64) -> PyResult<Py<PyAny>> {
        to_dict(
            py,
            &ingest::validate_with(&self.inner, artifact_threshold_uv),
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "Recording(subject_id={:?}, condition={}, trials={}, sample_rate={})",
            self.inner.subject_id,
            self.inner.condition,
            self.inner.trials.len(),
            self.inner.sample_rate
        )
    }
}

/// A subject's 2D and 3D sessions.
#[pyclass(module = "pyeegstage", name = "Subject", from_py_object)]
#[derive(Clone)]
pub struct PySubject {
    inner: Subject,
}

#[pymethods]
impl PySubject {
    #[new]
    fn new(two_d: &PyRecording, three_d: &PyRecording) -> PyResult<Self> {
        Ok(PySubject {
            inner: Subject::new(two_d.inner.clone(), three_d.inner.clone()).or_py()?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn two_d(&self) -> PyRecording {
        PyRecording {
            inner: self.inner.two_d.clone(),
        }
    }

    #[getter]
    fn three_d(&self) -> PyRecording {
        PyRecording {
            inner: self.inner.three_d.clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!("Subject(id={:?})", self.inner.id)
    }
}

/// Labelled Stage III epoch features with a fixed train/test split.
#[pyclass(module = "pyeegstage", name = "FeatureDataset")]
pub struct PyFeatureDataset {
    inner: eegstage::features::FeatureDataset,
}

#[pymethods]
impl PyFeatureDataset {
    /// Epochs the Rest stage of both sessions. `config` follows the
    /// FeatureConfig layout; omitted keys take the paper defaults.
    #[staticmethod]
    #[pyo3(signature = (subject, config = None, split_seed = 0))]
    fn from_subject(
        py: Python<'_>,
        subject: &PySubject,
        config: Option<&Bound<'_, PyDict>>,
        split_seed: u64,
    ) -> PyResult<Self> {
        let cfg: FeatureConfig = from_dict(py, config)?;
        Ok(PyFeatureDataset {
            inner: assemble_dataset(
                &subject.inner.two_d,
                &subject.inner.three_d,
                &cfg,
                split_seed,
            )
            .or_py()?,
        })
    }

    #[getter]
    fn n_epochs(&self) -> usize {
        self.inner.n_epochs()
    }

    #[getter]
    fn channels(&self) -> Vec<String> {
        self.inner.channels.clone()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    /// "2D" / "3D" per epoch.
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner
            .labels
            .iter()
            .map(|c| c.short().to_uppercase())
            .collect()
    }

    #[getter]
    fn train(&self) -> Vec<usize> {
        self.inner.train.clone()
    }

    #[getter]
    fn test(&self) -> Vec<usize> {
        self.inner.test.clone()
    }

    /// Epochs x features matrix of one channel.
    fn channel_matrix(&self, channel: &str) -> PyResult<Vec<Vec<f64>>> {
        let c = self
            .inner
            .channel_index(channel)
            .ok_or_else(|| PyValueError::new_err(format!("unknown channel {channel:?}")))?;
        Ok(self
            .inner
            .channel_matrix(c)
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect())
    }

    /// Per-channel evaluation and channel-combination search; returns the
    /// search result as a dict.
    #[pyo3(signature = (classifier = "svm", strategy = "ranked-prefix", config = None))]
    fn classify(
        &self,
        py: Python<'_>,
        classifier: &str,
        strategy: &str,
        config: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<Py<PyAny>> {
        let kind: ClassifierKind = parse(classifier)?;
        let strategy: SearchStrategy = parse(strategy)?;
        let cfg: SearchConfig = from_dict(py, config)?;
        let result = py
            .detach(|| channel_combination_search(&self.inner, kind, strategy, &cfg))
            .or_py()?;
        to_dict(py, &result)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// Fig. 2 band selection for one comparison stage ("I", "II" or "III").
#[pyfunction]
#[pyo3(signature = (subjects, stage = "III", threshold = 2.0, min_channels = 3, window_len = 512, hop = 1))]
fn select_bands(
    py: Python<'_>,
    subjects: Vec<PySubject>,
    stage: &str,
    threshold: f64,
    min_channels: usize,
    window_len: usize,
    hop: usize,
) -> PyResult<Py<PyAny>> {
    let stage: ComparisonStage = parse(stage)?;
    let cfg = BandSelectionConfig {
        threshold,
        min_channels,
        ..Default::default()
    };
    let stft = StftConfig { window_len, hop };
    let sel = py
        .detach(|| {
            let filtered = subjects
                .iter()
                .map(|s| FilteredSubject::new(&s.inner, &PreprocessConfig::default()))
                .collect::<eegstage::Result<Vec<_>>>()?;
            band_selection(&filtered, stage, &stft, &cfg)
        })
        .or_py()?;
    to_dict(py, &sel)
}

/// Generates a preset study; returns (study info dict, list of Subject).
#[pyfunction]
#[pyo3(signature = (preset, seed = 0, n_subjects = 5, trials = None, hop = 1))]
fn synth_preset(
    py: Python<'_>,
    preset: &str,
    seed: u64,
    n_subjects: usize,
    trials: Option<usize>,
    hop: usize,
) -> PyResult<(Py<PyAny>, Vec<PySubject>)> {
    let preset: Preset = parse(preset)?;
    let mut setup = SynthSetup::default();
    if let Some(t) = trials {
        setup.paradigm.trials_per_condition = t;
    }
    setup.stft.hop = hop;
    let (info, subjects) = py
        .detach(|| generate_preset(preset, seed, n_subjects, &setup))
        .or_py()?;
    let subjects = subjects
        .into_iter()
        .map(|s| Subject::new(s.two_d, s.three_d).map(|inner| PySubject { inner }))
        .collect::<eegstage::Result<Vec<_>>>()
        .or_py()?;
    Ok((to_dict(py, &info)?, subjects))
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    Preset::ALL.iter().map(|p| p.name()).collect()
}

/// Normalised band powers (percent of 1-49 Hz power) keyed by band name.
#[pyfunction]
#[pyo3(signature = (series, sample_rate = 512.0, window_len = 512, hop = 1))]
fn band_powers(
    series: Vec<f64>,
    sample_rate: f64,
    window_len: usize,
    hop: usize,
) -> PyResult<Vec<(String, f64)>> {
    let psd = eegstage::spectral::stft_psd(&series, sample_rate, &StftConfig { window_len, hop })
        .or_py()?;
    let p = eegstage::spectral::normalized_band_powers(&psd).or_py()?;
    Ok(Band::ALL
        .iter()
        .map(|b| (b.symbol().to_string(), p[b.index()]))
        .collect())
}

/// Time-averaged STFT power spectral density: (frequencies, power).
#[pyfunction]
#[pyo3(signature = (series, sample_rate = 512.0, window_len = 512, hop = 1))]
fn psd(
    series: Vec<f64>,
    sample_rate: f64,
    window_len: usize,
    hop: usize,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = eegstage::spectral::stft_psd(&series, sample_rate, &StftConfig { window_len, hop })
        .or_py()?;
    Ok((p.freqs, p.power))
}

/// Zero-phase Butterworth band-pass.
#[pyfunction]
#[pyo3(signature = (series, low, high, order = 3, sample_rate = 512.0))]
fn bandpass(
    series: Vec<f64>,
    low: f64,
    high: f64,
    order: usize,
    sample_rate: f64,
) -> PyResult<Vec<f64>> {
    butter_bandpass_zero_phase(&series, low, high, order, sample_rate).or_py()
}

/// Zero-phase 50 Hz notch.
#[pyfunction]
#[pyo3(signature = (series, sample_rate = 512.0, q = 35.0))]
fn notch(series: Vec<f64>, sample_rate: f64, q: f64) -> PyResult<Vec<f64>> {
    notch_50_q(&series, sample_rate, q).or_py()
}

/// Multi-level DWT: (details D1..Dn, approximation).
#[pyfunction]
#[pyo3(signature = (series, family = 1, levels = 7))]
fn dwt(series: Vec<f64>, family: usize, levels: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let c = dwt_decompose(&series, &WaveletSpec { family, levels }).or_py()?;
    Ok((c.details, c.approximation))
}

/// Inverse of `dwt`.
#[pyfunction]
#[pyo3(signature = (details, approximation, original_len, family = 1))]
fn idwt(
    details: Vec<Vec<f64>>,
    approximation: Vec<f64>,
    original_len: usize,
    family: usize,
) -> PyResult<Vec<f64>> {
    let spec = WaveletSpec {
        family,
        levels: details.len(),
    };
    dwt_reconstruct(&DwtCoeffs {
        details,
        approximation,
        spec,
        original_len,
    })
    .or_py()
}

/// Confusion counts, accuracy, sensitivity and specificity; labels are
/// "2D" (positive) or "3D".
#[pyfunction]
fn metrics(py: Python<'_>, predicted: Vec<String>, truth: Vec<String>) -> PyResult<Py<PyAny>> {
    let conv = |v: &[String]| {
        v.iter()
            .map(|s| parse::<Condition>(s))
            .collect::<PyResult<Vec<_>>>()
    };
    to_dict(
        py,
        &confusion_metrics(&conv(&predicted)?, &conv(&truth)?).or_py()?,
    )
}

#[pymodule]
fn pyeegstage(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRecording>()?;
    m.add_class::<PySubject>()?;
    m.add_class::<PyFeatureDataset>()?;
    m.add_function(wrap_pyfunction!(select_bands, m)?)?;
    m.add_function(wrap_pyfunction!(synth_preset, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(band_powers, m)?)?;
    m.add_function(wrap_pyfunction!(psd, m)?)?;
    m.add_function(wrap_pyfunction!(bandpass, m)?)?;
    m.add_function(wrap_pyfunction!(notch, m)?)?;
    m.add_function(wrap_pyfunction!(dwt, m)?)?;
    m.add_function(wrap_pyfunction!(idwt, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    Ok(())
}
