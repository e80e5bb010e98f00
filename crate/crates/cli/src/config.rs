//! Pipeline configuration: JSON file, then command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use eegstage::classify::{ClassifierKind, SearchConfig, SearchStrategy};
use eegstage::features::FeatureConfig;
use eegstage::pipeline::SpectralConfig;
use eegstage::spectral::BandSelectionConfig;
use eegstage::ComparisonStage;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Study directory, session directory or manifest file.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Subject ids to process; empty means every subject found.
    pub subjects: Vec<String>,
    /// Comparisons run by `bandselect`.
    pub stages: Vec<ComparisonStage>,
    /// Band-selection preprocessing and STFT.
    pub spectral: SpectralConfig,
    pub selection: BandSelectionConfig,
    /// Take the feature bands from a `bandselect` Stage III report.
    pub bands_from: Option<PathBuf>,
    pub features: FeatureConfig,
    pub classifier: ClassifierKind,
    pub strategy: SearchStrategy,
    pub search: SearchConfig,
    pub split_seed: u64,
    /// Also evaluate the other classifier on the same ranked prefixes.
    pub cross_evaluate: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: None,
            out: None,
            subjects: Vec::new(),
            stages: vec![
                ComparisonStage::I,
                ComparisonStage::II,
                ComparisonStage::III,
            ],
            spectral: SpectralConfig::default(),
            selection: BandSelectionConfig::default(),
            bands_from: None,
            features: FeatureConfig::default(),
            classifier: ClassifierKind::Svm,
            strategy: SearchStrategy::RankedPrefix,
            search: SearchConfig::default(),
            split_seed: 0,
            cross_evaluate: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn data_path(&self) -> CliResult<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::usage("no input given (use --data or the config's \"data\")"))
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| {
            CliError::usage("no output directory given (use --out or the config's \"out\")")
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises") + "\n"
    }
}
