//! Artifact screening, trial averaging, line-noise notch and zero-phase
//! Butterworth bandpass filtering.
//!
//! Two chains are provided. Band selection averages all trials of a session
//! before filtering the averaged trial at 1–55 Hz; classification filters
//! each stage segment at 1–35 Hz without averaging.

pub mod iir;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest;
use crate::model::{Recording, StageSegment, Trial};

pub use iir::{butterworth_bandpass, iir_notch, Biquad, SosFilter};

pub const LINE_FREQUENCY: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FilterKind {
    Bandpass { f_lo: f64, f_hi: f64 },
    Notch { f0: f64, q: f64 },
}

/// Declarative description of one filtering step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub zero_phase: bool,
}

impl FilterSpec {
    pub fn bandpass(f_lo: f64, f_hi: f64, order: usize) -> Self {
        FilterSpec {
            kind: FilterKind::Bandpass { f_lo, f_hi },
            order,
            zero_phase: true,
        }
    }

    pub fn notch(f0: f64, q: f64) -> Self {
        FilterSpec {
            kind: FilterKind::Notch { f0, q },
            order: 2,
            zero_phase: true,
        }
    }

    pub fn design(&self, sample_rate: f64) -> Result<SosFilter> {
        match self.kind {
            FilterKind::Bandpass { f_lo, f_hi } => {
                butterworth_bandpass(self.order, f_lo, f_hi, sample_rate)
            }
            FilterKind::Notch { f0, q } => iir_notch(f0, q, sample_rate),
        }
    }

    pub fn apply(&self, signal: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
        let filt = self.design(sample_rate)?;
        Ok(if self.zero_phase {
            filt.filtfilt(signal)
        } else {
            filt.filter_steady(signal)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub artifact_threshold_uv: f64,
    /// Drop trials whose fraction of artifact samples exceeds this value.
    /// `None` keeps every trial.
    pub reject_fraction: Option<f64>,
    pub notch_q: f64,
    /// Apply the notch to each trial before averaging instead of after.
    pub notch_before_average: bool,
    pub filter_order: usize,
    pub band_selection_band: (f64, f64),
    pub classification_band: (f64, f64),
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            artifact_threshold_uv: ingest::DEFAULT_ARTIFACT_THRESHOLD_UV,
            reject_fraction: None,
            notch_q: 35.0,
            notch_before_average: false,
            filter_order: 3,
            band_selection_band: (1.0, 55.0),
            classification_band: (1.0, 35.0),
        }
    }
}

/// Zero-phase 50 Hz notch with the default quality factor.
pub fn notch_50(signal: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    notch_50_q(signal, sample_rate, PreprocessConfig::default().notch_q)
}

pub fn notch_50_q(signal: &[f64], sample_rate: f64, q: f64) -> Result<Vec<f64>> {
    if sample_rate <= 2.0 * LINE_FREQUENCY {
        return Err(Error::param(format!(
            "sample rate {sample_rate} Hz too low for a {LINE_FREQUENCY} Hz notch"
        )));
    }
    FilterSpec::notch(LINE_FREQUENCY, q).apply(signal, sample_rate)
}

/// Forward-backward Butterworth bandpass.
pub fn butter_bandpass_zero_phase(
    signal: &[f64],
    f_lo: f64,
    f_hi: f64,
    order: usize,
    sample_rate: f64,
) -> Result<Vec<f64>> {
    FilterSpec::bandpass(f_lo, f_hi, order).apply(signal, sample_rate)
}

/// Element-wise mean of equally shaped trials.
pub fn average_trials(trials: &[Trial]) -> Result<Trial> {
    let first = trials
        .first()
        .ok_or_else(|| Error::structural("cannot average an empty trial list"))?;
    let mut sum = Array2::<f64>::zeros(first.samples.raw_dim());
    for (i, t) in trials.iter().enumerate() {
        if t.samples.dim() != first.samples.dim() || t.sample_rate != first.sample_rate {
            return Err(Error::structural(format!(
                "trial {i} has shape {:?} @ {} Hz, expected {:?} @ {} Hz",
                t.samples.dim(),
                t.sample_rate,
                first.samples.dim(),
                first.sample_rate
            )));
        }
        sum += &t.samples;
    }
    sum /= trials.len() as f64;
    Ok(Trial {
        samples: sum,
        paradigm: first.paradigm,
        sample_rate: first.sample_rate,
    })
}

/// Applies `f` to every row of `samples`.
fn map_rows(samples: &Array2<f64>, f: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Array2<f64>> {
    let mut out = Array2::<f64>::zeros(samples.raw_dim());
    for (src, mut dst) in samples.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let row = src.to_vec();
        let filtered = f(&row)?;
        dst.assign(&ndarray::ArrayView1::from(&filtered));
    }
    Ok(out)
}

/// Artifact screen, average, notch, then 1–55 Hz bandpass on every channel.
pub fn preprocess_for_band_selection(
    recording: &Recording,
    cfg: &PreprocessConfig,
) -> Result<Trial> {
    let problems = recording.structural_problems();
    if !problems.is_empty() {
        return Err(Error::structural(problems.join("; ")));
    }
    let fs = recording.sample_rate as f64;
    let notch = FilterSpec::notch(LINE_FREQUENCY, cfg.notch_q).design(fs)?;
    let (lo, hi) = cfg.band_selection_band;
    let bandpass = butterworth_bandpass(cfg.filter_order, lo, hi, fs)?;

    let kept: Vec<Trial> = recording
        .trials
        .iter()
        .filter(|t| match cfg.reject_fraction {
            None => true,
            Some(frac) => {
                let count = ingest::count_artifacts(t, cfg.artifact_threshold_uv);
                (count as f64) <= frac * t.samples.len() as f64
            }
        })
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::Degenerate(
            "artifact rejection removed every trial".into(),
        ));
    }

    let mut avg = if cfg.notch_before_average {
        let notched: Vec<Trial> = kept
            .iter()
            .map(|t| {
                Ok(Trial {
                    samples: map_rows(&t.samples, |r| Ok(notch.filtfilt(r)))?,
                    ..t.clone()
                })
            })
            .collect::<Result<_>>()?;
        average_trials(&notched)?
    } else {
        let avg = average_trials(&kept)?;
        Trial {
            samples: map_rows(&avg.samples, |r| Ok(notch.filtfilt(r)))?,
            ..avg
        }
    };
    avg.samples = map_rows(&avg.samples, |r| Ok(bandpass.filtfilt(r)))?;
    Ok(avg)
}

/// Notch then 1–35 Hz bandpass on each channel of a stage segment.
pub fn preprocess_for_classification(
    segment: &StageSegment,
    cfg: &PreprocessConfig,
) -> Result<StageSegment> {
    let fs = segment.sample_rate as f64;
    let notch = FilterSpec::notch(LINE_FREQUENCY, cfg.notch_q).design(fs)?;
    let (lo, hi) = cfg.classification_band;
    let bandpass = butterworth_bandpass(cfg.filter_order, lo, hi, fs)?;
    let samples = map_rows(&segment.samples, |r| {
        Ok(bandpass.filtfilt(&notch.filtfilt(r)))
    })?;
    Ok(StageSegment {
        samples,
        ..segment.clone()
    })
}
