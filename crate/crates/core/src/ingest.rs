//! On-disk session format.
//!
//! A session is a JSON manifest next to one CSV file per trial. Each trial
//! CSV has a header row of channel labels and one row per sample, values in
//! microvolts. Values are written with the shortest representation that
//! parses back to the identical `f64`, so save/load is bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Condition, Montage, ParadigmSpec, Recording, Trial, STANDARD_CHANNELS};

pub const DEFAULT_ARTIFACT_THRESHOLD_UV: f64 = 100.0;
pub const MANIFEST_FILE: &str = "manifest.json";

/// JSON manifest describing one recorded session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub subject_id: String,
    pub condition: Condition,
    pub sample_rate: u32,
    pub paradigm: ParadigmSpec,
    pub channel_order: Vec<String>,
    #[serde(default = "default_reference")]
    pub reference: String,
    /// Paths relative to the manifest's directory.
    pub trial_files: Vec<PathBuf>,
}

fn default_reference() -> String {
    crate::model::REFERENCE_CHANNEL.to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    /// Samples above the artifact threshold, one count per trial.
    pub artifact_counts: Vec<usize>,
}

impl ValidationReport {
    pub fn is_loadable(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn total_artifacts(&self) -> usize {
        self.artifact_counts.iter().sum()
    }
}

/// Count of samples with `|amplitude| > threshold_uv`.
pub fn count_artifacts(trial: &Trial, threshold_uv: f64) -> usize {
    trial
        .samples
        .iter()
        .filter(|v| v.abs() > threshold_uv)
        .count()
}

pub fn validate(recording: &Recording) -> ValidationReport {
    validate_with(recording, DEFAULT_ARTIFACT_THRESHOLD_UV)
}

pub fn validate_with(recording: &Recording, threshold_uv: f64) -> ValidationReport {
    let errors = recording.structural_problems();
    let artifact_counts: Vec<usize> = recording
        .trials
        .iter()
        .map(|t| count_artifacts(t, threshold_uv))
        .collect();
    let mut warnings = Vec::new();
    for (i, &n) in artifact_counts.iter().enumerate() {
        if n > 0 {
            warnings.push(format!("trial {i}: {n} samples exceed {threshold_uv} uV"));
        }
    }
    if let Some(p) = recording.paradigm() {
        if recording.trials.len() != p.trials_per_condition {
            warnings.push(format!(
                "{} trials present, paradigm expects {}",
                recording.trials.len(),
                p.trials_per_condition
            ));
        }
    }
    ValidationReport {
        errors,
        warnings,
        artifact_counts,
    }
}

/// Reads a manifest and all of its trial files.
pub fn load_recording(manifest_path: impl AsRef<Path>) -> Result<Recording> {
    let manifest_path = manifest_path.as_ref();
    let manifest = read_manifest(manifest_path)?;
    manifest.paradigm.validate()?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let montage = Montage::standard();
    let order = Montage::new(manifest.channel_order.clone(), manifest.reference.clone())
        .map_err(|e| Error::parse(manifest_path, e.to_string()))?;
    // position in the file -> row in the standard montage
    let to_row: Vec<usize> = order
        .channels()
        .iter()
        .map(|c| {
            montage.index_of(c).ok_or_else(|| {
                Error::parse(
                    manifest_path,
                    format!("channel {c:?} not in the standard montage"),
                )
            })
        })
        .collect::<Result<_>>()?;
    if manifest.trial_files.len() != manifest.paradigm.trials_per_condition {
        return Err(Error::parse(
            manifest_path,
            format!(
                "{} trial files listed, paradigm expects {}",
                manifest.trial_files.len(),
                manifest.paradigm.trials_per_condition
            ),
        ));
    }

    let expected_samples = manifest.paradigm.total_samples(manifest.sample_rate);
    let trials = manifest
        .trial_files
        .iter()
        .map(|rel| {
            let path = base.join(rel);
            let samples =
                read_trial_csv(&path, &manifest.channel_order, &to_row, expected_samples)?;
            Ok(Trial {
                samples,
                paradigm: manifest.paradigm,
                sample_rate: manifest.sample_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Recording {
        subject_id: manifest.subject_id,
        condition: manifest.condition,
        sample_rate: manifest.sample_rate,
        montage,
        trials,
    })
}

pub fn read_manifest(path: &Path) -> Result<SessionManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}

fn read_trial_csv(
    path: &Path,
    channel_order: &[String],
    to_row: &[usize],
    expected_samples: usize,
) -> Result<Array2<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    if header.len() != channel_order.len() {
        return Err(Error::Structural(format!(
            "{}: {} channel columns, expected {}",
            path.display(),
            header.len(),
            channel_order.len()
        )));
    }
    for (col, (got, want)) in header.iter().zip(channel_order).enumerate() {
        if got.trim() != want {
            return Err(Error::parse(
                path,
                format!("header column {col} is {got:?}, manifest lists {want:?}"),
            ));
        }
    }

    let mut samples = Array2::<f64>::zeros((STANDARD_CHANNELS.len(), expected_samples));
    let mut n_rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let line = row_idx + 2;
        if record.len() != channel_order.len() {
            return Err(Error::Structural(format!(
                "{}: line {line} has {} values, expected {}",
                path.display(),
                record.len(),
                channel_order.len()
            )));
        }
        if row_idx >= expected_samples {
            n_rows = row_idx + 1;
            continue;
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("line {line}, column {col}: {field:?} is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("line {line}, column {col}: non-finite sample {field:?}"),
                ));
            }
            samples[[to_row[col], row_idx]] = v;
        }
        n_rows = row_idx + 1;
    }
    if n_rows != expected_samples {
        return Err(Error::Structural(format!(
            "{}: {n_rows} samples, expected {expected_samples}",
            path.display()
        )));
    }
    Ok(samples)
}

/// Writes `recording` as `dir/manifest.json` plus `dir/trial_XX.csv`.
pub fn save_recording(recording: &Recording, dir: impl AsRef<Path>) -> Result<SessionManifest> {
    let dir = dir.as_ref();
    let problems = recording.structural_problems();
    if !problems.is_empty() {
        return Err(Error::structural(problems.join("; ")));
    }
    let paradigm = recording
        .paradigm()
        .ok_or_else(|| Error::structural("recording has no trials"))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut trial_files = Vec::with_capacity(recording.trials.len());
    for (i, trial) in recording.trials.iter().enumerate() {
        let name = PathBuf::from(format!("trial_{:02}.csv", i + 1));
        let path = dir.join(&name);
        write_trial_csv(&path, recording.montage.channels(), &trial.samples)?;
        trial_files.push(name);
    }
    let manifest = SessionManifest {
        subject_id: recording.subject_id.clone(),
        condition: recording.condition,
        sample_rate: recording.sample_rate,
        paradigm: ParadigmSpec {
            trials_per_condition: recording.trials.len(),
            ..paradigm
        },
        channel_order: recording.montage.channels().to_vec(),
        reference: recording.montage.reference().to_string(),
        trial_files,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn write_trial_csv(path: &Path, channels: &[String], samples: &Array2<f64>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let to_io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    };
    w.write_record(channels).map_err(to_io)?;
    let mut record = Vec::with_capacity(channels.len());
    for col in samples.columns() {
        record.clear();
        record.extend(col.iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(to_io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
