//! Per-subject glue: stage band-power comparisons, multi-subject band
//! selection and Stage III classification.

use serde::{Deserialize, Serialize};

use crate::classify::{
    channel_combination_search, ClassifierKind, SearchConfig, SearchResult, SearchStrategy,
};
use crate::error::{Error, Result};
use crate::features::{assemble_dataset, FeatureConfig, FeatureDataset};
use crate::model::{stage_slice, ComparisonStage, Condition, Recording, Stage, Trial};
use crate::preprocess::{preprocess_for_band_selection, PreprocessConfig};
use crate::spectral::{
    band_difference_matrix, band_power_matrix, normalized_band_powers, select_dominant_bands,
    stft_psd, BandPowerMatrix, BandSelectionConfig, DominantBandReport, StftConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub preprocess: PreprocessConfig,
    pub stft: StftConfig,
}

/// A subject's two sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub two_d: Recording,
    pub three_d: Recording,
}

impl Subject {
    pub fn new(two_d: Recording, three_d: Recording) -> Result<Self> {
        if two_d.condition != Condition::TwoD || three_d.condition != Condition::ThreeD {
            return Err(Error::structural(format!(
                "expected a TwoD and a ThreeD session, got {} and {}",
                two_d.condition, three_d.condition
            )));
        }
        if two_d.subject_id != three_d.subject_id {
            return Err(Error::structural(format!(
                "sessions belong to different subjects: {} and {}",
                two_d.subject_id, three_d.subject_id
            )));
        }
        Ok(Subject {
            id: two_d.subject_id.clone(),
            two_d,
            three_d,
        })
    }

    pub fn recording(&self, condition: Condition) -> &Recording {
        match condition {
            Condition::TwoD => &self.two_d,
            Condition::ThreeD => &self.three_d,
        }
    }
}

/// Averaged, filtered trials of both conditions.
#[derive(Debug, Clone)]
pub struct FilteredSubject {
    pub id: String,
    pub channels: Vec<String>,
    pub two_d: Trial,
    pub three_d: Trial,
}

impl FilteredSubject {
    pub fn new(subject: &Subject, cfg: &PreprocessConfig) -> Result<Self> {
        Ok(FilteredSubject {
            id: subject.id.clone(),
            channels: subject.two_d.montage.channels().to_vec(),
            two_d: preprocess_for_band_selection(&subject.two_d, cfg)?,
            three_d: preprocess_for_band_selection(&subject.three_d, cfg)?,
        })
    }

    pub fn trial(&self, condition: Condition) -> &Trial {
        match condition {
            Condition::TwoD => &self.two_d,
            Condition::ThreeD => &self.three_d,
        }
    }
}

/// `R2b`, `R2a`, `R3b` or `R3a`.
pub fn side_label(condition: Condition, stage: Stage) -> String {
    let c = match condition {
        Condition::TwoD => "2",
        Condition::ThreeD => "3",
    };
    let s = match stage {
        Stage::Relax => "b",
        Stage::Watch => "w",
        Stage::Rest => "a",
    };
    format!("R{c}{s}")
}

/// Normalised band powers of one channel of one stage of a filtered trial.
pub fn channel_band_powers(
    filtered: &Trial,
    stage: Stage,
    channel: usize,
    stft: &StftConfig,
) -> Result<[f64; 5]> {
    let seg = stage_slice(filtered, stage)?;
    let row = seg.samples.row(channel).to_vec();
    normalized_band_powers(&stft_psd(&row, seg.sample_rate as f64, stft)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePowers {
    pub subject: String,
    pub stage: ComparisonStage,
    pub first: BandPowerMatrix,
    pub second: BandPowerMatrix,
    /// `first - second`.
    pub difference: BandPowerMatrix,
}

pub fn stage_powers(
    subject: &FilteredSubject,
    stage: ComparisonStage,
    stft: &StftConfig,
) -> Result<StagePowers> {
    let ((c1, s1), (c2, s2)) = stage.sides();
    let matrix = |c: Condition, s: Stage| -> Result<BandPowerMatrix> {
        let seg = stage_slice(subject.trial(c), s)?;
        band_power_matrix(
            &seg,
            &subject.channels,
            format!("{} {}", subject.id, side_label(c, s)),
            stft,
        )
    };
    let first = matrix(c1, s1)?;
    let second = matrix(c2, s2)?;
    let difference = band_difference_matrix(&first, &second)?;
    Ok(StagePowers {
        subject: subject.id.clone(),
        stage,
        first,
        second,
        difference,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub report: DominantBandReport,
    pub per_subject: Vec<StagePowers>,
}

/// Fig. 2 flow: per-subject difference matrices, averaged and thresholded.
pub fn band_selection(
    subjects: &[FilteredSubject],
    stage: ComparisonStage,
    stft: &StftConfig,
    cfg: &BandSelectionConfig,
) -> Result<BandSelection> {
    let per_subject = subjects
        .iter()
        .map(|s| stage_powers(s, stage, stft))
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<BandPowerMatrix> = per_subject.iter().map(|p| p.difference.clone()).collect();
    let mut report = select_dominant_bands(&diffs, cfg)?;
    report.stage = Some(stage);
    Ok(BandSelection {
        report,
        per_subject,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectClassification {
    pub subject: String,
    pub features: FeatureConfig,
    pub split_seed: u64,
    pub n_epochs: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub search: SearchResult,
}

pub fn classify_dataset(
    subject: &str,
    ds: &FeatureDataset,
    features: &FeatureConfig,
    split_seed: u64,
    kind: ClassifierKind,
    strategy: SearchStrategy,
    search: &SearchConfig,
) -> Result<SubjectClassification> {
    Ok(SubjectClassification {
        subject: subject.to_string(),
        features: features.clone(),
        split_seed,
        n_epochs: ds.n_epochs(),
        n_train: ds.train.len(),
        n_test: ds.test.len(),
        search: channel_combination_search(ds, kind, strategy, search)?,
    })
}

/// Stage III: Rest epochs of both sessions, features, channel search.
pub fn classify_subject(
    subject: &Subject,
    features: &FeatureConfig,
    split_seed: u64,
    kind: ClassifierKind,
    strategy: SearchStrategy,
    search: &SearchConfig,
) -> Result<SubjectClassification> {
    let ds = assemble_dataset(&subject.two_d, &subject.three_d, features, split_seed)?;
    classify_dataset(
        &subject.id,
        &ds,
        features,
        split_seed,
        kind,
        strategy,
        search,
    )
}
