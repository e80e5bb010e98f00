//! Command-line surface. Pipeline flags are optional overrides of
//! [`PipelineConfig`]; the documented defaults are the config defaults.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use eegstage::classify::{ClassifierKind, RankBy, SearchStrategy};
use eegstage::features::{FeatureKind, SplitMode};
use eegstage::spectral::AggregationRule;
use eegstage::synth::Preset;
use eegstage::wavelet::{Subband, SubbandMapping};
use eegstage::{Band, ComparisonStage};

use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(
    name = "eegstage",
    version,
    about = "Staged band-power analysis and classification of post-2D / post-3D resting EEG",
    after_help = "Exit status: 0 success, 2 usage or parameter error, 3 data error, 4 numerical failure."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic study with known band-power structure.
    Synth(SynthArgs),
    /// Load sessions, report structural errors and count artifact samples.
    IngestCheck(IngestArgs),
    /// Stage I-III band-power comparisons and dominant-band selection.
    Bandselect(BandselectArgs),
    /// Write the Stage III epoch feature matrices per subject.
    Featurize(FeaturizeArgs),
    /// Stage III per-channel classification and channel-combination search.
    Classify(ClassifyArgs),
    /// Summarise bandselect / classify results into tables and figure CSVs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in study: stage1-delta, stage3-paper-like or null.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub preset: Option<Preset>,
    /// JSON synthesis spec: one spec for both sessions, or {"two_d": ..., "three_d": ...}.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Master seed; with --spec it replaces the spec's seed. [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of subjects generated from a preset.
    #[arg(long, default_value_t = 5)]
    pub subjects: usize,
    /// Trials per session. [default: 15]
    #[arg(long)]
    pub trials: Option<usize>,
    /// STFT hop used to measure band powers while calibrating presets.
    #[arg(long, default_value_t = 1)]
    pub hop: usize,
    /// Output study directory.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Study directory, session directory or manifest file.
    #[arg(long)]
    pub data: PathBuf,
    /// Amplitude above which a sample counts as artifact, in uV.
    #[arg(long, default_value_t = eegstage::ingest::DEFAULT_ARTIFACT_THRESHOLD_UV)]
    pub artifact_threshold: f64,
    /// Also write ingest_report.json here.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding bandselect_stage*.json and classify_*.json.
    pub results: PathBuf,
    /// Where to write summary and figure files. [default: the results directory]
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON pipeline config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Study directory, session directory or manifest file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Only process this subject (repeatable). [default: all]
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
    /// Print the effective config as JSON and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Butterworth order of the zero-phase band-pass filters. [default: 3]
    #[arg(long)]
    pub filter_order: Option<usize>,
    /// Quality factor of the 50 Hz notch. [default: 35]
    #[arg(long)]
    pub notch_q: Option<f64>,
    /// Artifact amplitude threshold in uV. [default: 100]
    #[arg(long)]
    pub artifact_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StftArgs {
    /// Hanning window length of the STFT, in samples. [default: 512]
    #[arg(long)]
    pub window: Option<usize>,
    /// STFT hop in samples; 1 is the paper's maximal overlap, larger values decimate frames. [default: 1]
    #[arg(long)]
    pub hop: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BandselectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub stft: StftArgs,
    /// Comparison to run: I, II or III (repeatable). [default: I, II and III]
    #[arg(long = "stage")]
    pub stages: Vec<ComparisonStage>,
    /// Meaningful difference, in percentage points of normalised power. [default: 2]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Meaningful channels needed for a band to be dominant. [default: 3]
    #[arg(long)]
    pub min_channels: Option<usize>,
    /// Cross-subject aggregation: mean or majority. [default: mean]
    #[arg(long, value_parser = parse_rule)]
    pub rule: Option<AggregationRule>,
}

#[derive(Debug, Args)]
pub struct FeatureArgs {
    /// Feature extractor: dwt or stft. [default: dwt]
    #[arg(long)]
    pub features: Option<FeatureKind>,
    /// Dominant bands, comma separated. [default: delta,alpha]
    #[arg(long, value_delimiter = ',')]
    pub bands: Option<Vec<Band>>,
    /// Take the bands from a bandselect Stage III report (JSON).
    #[arg(long)]
    pub bands_from: Option<PathBuf>,
    /// Epoch length in seconds. [default: 4]
    #[arg(long)]
    pub epoch_window: Option<f64>,
    /// Epoch step in seconds. [default: 0.5]
    #[arg(long)]
    pub epoch_step: Option<f64>,
    /// Daubechies wavelet index; 1 is db1 (Haar). [default: 1]
    #[arg(long)]
    pub wavelet: Option<usize>,
    /// DWT decomposition levels. [default: 7]
    #[arg(long)]
    pub levels: Option<usize>,
    /// Explicit DWT sub-bands, comma separated (e.g. A7,D6). [default: mapped from the bands]
    #[arg(long, value_delimiter = ',')]
    pub subbands: Option<Vec<Subband>>,
    /// Band to sub-band mapping: paper-table or standard. [default: paper-table]
    #[arg(long, value_parser = parse_mapping)]
    pub mapping: Option<SubbandMapping>,
    /// Train/test split: trial-blocked, shuffled or chronological. [default: trial-blocked]
    #[arg(long)]
    pub split: Option<SplitMode>,
    /// Seed of the train/test split. [default: 0]
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub stft: StftArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[command(flatten)]
    pub stft: StftArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    /// Classifier: svm or plsr. [default: svm]
    #[arg(long)]
    pub classifier: Option<ClassifierKind>,
    /// Channel search: ranked-prefix or exhaustive-<k> (k <= 4). [default: ranked-prefix]
    #[arg(long)]
    pub strategy: Option<SearchStrategy>,
    /// Cross-validation folds, K. [default: 10]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seed of the fold assignment. [default: 0]
    #[arg(long)]
    pub cv_seed: Option<u64>,
    /// Largest number of PLSR components searched. [default: 10]
    #[arg(long)]
    pub max_components: Option<usize>,
    /// SVM width grid as multiples of the feature scale. [default: 0.1,0.5,1,2,5,10]
    #[arg(long, value_delimiter = ',')]
    pub sigma_multipliers: Option<Vec<f64>>,
    /// SVM box constraint grid. [default: 0.1,1,10,100]
    #[arg(long, value_delimiter = ',')]
    pub c_values: Option<Vec<f64>>,
    /// Score used for channel ranking and best combination: cv or test. [default: cv]
    #[arg(long)]
    pub rank_by: Option<RankBy>,
    /// Longest ranked prefix evaluated. [default: all channels]
    #[arg(long)]
    pub max_prefix: Option<usize>,
    /// Let epochs of one trial fall into different CV folds. [default: off]
    #[arg(long)]
    pub ungrouped_cv: bool,
    /// Also evaluate the other classifier on the same ranked prefixes. [default: off]
    #[arg(long)]
    pub cross: bool,
}

fn parse_rule(s: &str) -> Result<AggregationRule, String> {
    match s {
        "mean" => Ok(AggregationRule::Mean),
        "majority" => Ok(AggregationRule::Majority),
        _ => Err(format!("unknown rule {s:?} (mean or majority)")),
    }
}

fn parse_mapping(s: &str) -> Result<SubbandMapping, String> {
    match s {
        "paper-table" => Ok(SubbandMapping::PaperTable),
        "standard" => Ok(SubbandMapping::Standard),
        _ => Err(format!("unknown mapping {s:?} (paper-table or standard)")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl CommonArgs {
    pub fn base_config(&self) -> crate::error::CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if self.data.is_some() {
            cfg.data = self.data.clone();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if !self.subjects.is_empty() {
            cfg.subjects = self.subjects.clone();
        }
        Ok(cfg)
    }
}

impl PreprocessArgs {
    /// Band-selection and classification preprocessing share these flags.
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        for p in [&mut cfg.spectral.preprocess, &mut cfg.features.preprocess] {
            set(&mut p.filter_order, self.filter_order);
            set(&mut p.notch_q, self.notch_q);
            set(&mut p.artifact_threshold_uv, self.artifact_threshold);
        }
    }
}

impl StftArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        for s in [&mut cfg.spectral.stft, &mut cfg.features.stft] {
            set(&mut s.window_len, self.window);
            set(&mut s.hop, self.hop);
        }
    }
}

impl BandselectArgs {
    pub fn config(&self) -> crate::error::CliResult<PipelineConfig> {
        let mut cfg = self.common.base_config()?;
        self.preprocess.apply(&mut cfg);
        self.stft.apply(&mut cfg);
        if !self.stages.is_empty() {
            cfg.stages = self.stages.clone();
        }
        set(&mut cfg.selection.threshold, self.threshold);
        set(&mut cfg.selection.min_channels, self.min_channels);
        set(&mut cfg.selection.rule, self.rule);
        Ok(cfg)
    }
}

impl FeatureArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let f = &mut cfg.features;
        set(&mut f.kind, self.features);
        set(&mut f.bands, self.bands.clone());
        set(&mut f.epoch.window_s, self.epoch_window);
        set(&mut f.epoch.step_s, self.epoch_step);
        set(&mut f.wavelet.family, self.wavelet);
        set(&mut f.wavelet.levels, self.levels);
        if self.subbands.is_some() {
            f.subbands = self.subbands.clone();
        }
        set(&mut f.mapping, self.mapping);
        set(&mut f.split, self.split);
        set(&mut cfg.split_seed, self.split_seed);
        if self.bands_from.is_some() {
            cfg.bands_from = self.bands_from.clone();
        }
    }
}

impl FeaturizeArgs {
    pub fn config(&self) -> crate::error::CliResult<PipelineConfig> {
        let mut cfg = self.common.base_config()?;
        self.preprocess.apply(&mut cfg);
        self.stft.apply(&mut cfg);
        self.features.apply(&mut cfg);
        Ok(cfg)
    }
}

impl ClassifyArgs {
    pub fn config(&self) -> crate::error::CliResult<PipelineConfig> {
        let mut cfg = self.common.base_config()?;
        self.preprocess.apply(&mut cfg);
        self.stft.apply(&mut cfg);
        self.features.apply(&mut cfg);
        set(&mut cfg.classifier, self.classifier);
        set(&mut cfg.strategy, self.strategy);
        let cv = &mut cfg.search.cv;
        set(&mut cv.folds, self.folds);
        set(&mut cv.seed, self.cv_seed);
        set(&mut cv.max_components, self.max_components);
        set(&mut cv.sigma_multipliers, self.sigma_multipliers.clone());
        set(&mut cv.c_values, self.c_values.clone());
        if self.ungrouped_cv {
            cv.group_by_trial = false;
        }
        set(&mut cfg.search.rank_by, self.rank_by);
        if self.max_prefix.is_some() {
            cfg.search.max_prefix = self.max_prefix;
        }
        if self.cross {
            cfg.cross_evaluate = true;
        }
        Ok(cfg)
    }
}
