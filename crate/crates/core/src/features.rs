//! Rest-stage epoching and per-channel STFT / DWT feature datasets.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2, Array3, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    seconds_to_samples, stage_slice, Band, Condition, Recording, Stage, StageSegment,
};
use crate::preprocess::{preprocess_for_classification, PreprocessConfig};
use crate::spectral::{self, StftConfig};
use crate::wavelet::{self, Subband, SubbandMapping, WaveletSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpochConfig {
    pub window_s: f64,
    pub step_s: f64,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            window_s: 4.0,
            step_s: 0.5,
        }
    }
}

/// A fixed-length slice of a Rest segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub samples: Array2<f64>,
    pub sample_rate: u32,
    pub trial: usize,
    pub offset_s: f64,
    pub label: Condition,
}

/// Cuts `segment` into windows at `0, step, 2 step, …, duration - window`.
pub fn epoch_segment(
    segment: &StageSegment,
    cfg: &EpochConfig,
    trial: usize,
    label: Condition,
) -> Result<Vec<Epoch>> {
    let fs = segment.sample_rate;
    let win = seconds_to_samples(cfg.window_s, fs);
    let step = seconds_to_samples(cfg.step_s, fs);
    if win == 0 || step == 0 {
        return Err(Error::param(format!(
            "epoch window {} s and step {} s must both span at least one sample",
            cfg.window_s, cfg.step_s
        )));
    }
    let len = segment.samples.ncols();
    if len < win {
        return Err(Error::param(format!(
            "segment of {len} samples is shorter than the {win}-sample epoch window"
        )));
    }
    let count = (len - win) / step + 1;
    Ok((0..count)
        .map(|k| Epoch {
            samples: segment
                .samples
                .slice(s![.., k * step..k * step + win])
                .to_owned(),
            sample_rate: fs,
            trial,
            offset_s: (k * step) as f64 / fs as f64,
            label,
        })
        .collect())
}

/// Normalised power of `bands` for each channel of the epoch. The STFT
/// window is shortened to the epoch length when the epoch is shorter.
pub fn stft_features(epoch: &Epoch, bands: &[Band], stft: &StftConfig) -> Result<Vec<Vec<f64>>> {
    if bands.is_empty() {
        return Err(Error::param(
            "STFT features need at least one dominant band",
        ));
    }
    let cfg = StftConfig {
        window_len: stft.window_len.min(epoch.samples.ncols()),
        hop: stft.hop,
    };
    let fs = epoch.sample_rate as f64;
    epoch
        .samples
        .rows()
        .into_iter()
        .map(|row| {
            let psd = spectral::stft_psd(&row.to_vec(), fs, &cfg)?;
            let pct = spectral::normalized_band_powers(&psd)?;
            Ok(bands.iter().map(|b| pct[b.index()]).collect())
        })
        .collect()
}

/// `[min, max, mean, population SD]` of the concatenated coefficients of
/// the selected sub-bands, per channel.
pub fn dwt_features(
    epoch: &Epoch,
    subbands: &[Subband],
    spec: &WaveletSpec,
) -> Result<Vec<Vec<f64>>> {
    if subbands.is_empty() {
        return Err(Error::param("DWT features need at least one sub-band"));
    }
    epoch
        .samples
        .rows()
        .into_iter()
        .map(|row| {
            let coeffs = wavelet::dwt_decompose(&row.to_vec(), spec)?;
            let mut pooled = Vec::new();
            for sb in subbands {
                let c = sb.coefficients(&coeffs).ok_or_else(|| {
                    Error::param(format!(
                        "sub-band {} not present in a {}-level transform",
                        sb.label(spec.levels),
                        spec.levels
                    ))
                })?;
                pooled.extend_from_slice(c);
            }
            Ok(summary_stats(&pooled).to_vec())
        })
        .collect()
}

fn summary_stats(v: &[f64]) -> [f64; 4] {
    if v.is_empty() {
        return [0.0; 4];
    }
    let n = v.len() as f64;
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    [min, max, mean, var.sqrt()]
}

/// For each band, the sub-band whose nominal range overlaps it most.
/// Duplicates are dropped, keeping first occurrence.
pub fn subbands_for_bands(
    bands: &[Band],
    levels: usize,
    sample_rate: f64,
    mapping: SubbandMapping,
) -> Result<Vec<Subband>> {
    let candidates: Vec<Subband> = std::iter::once(Subband::Approximation)
        .chain((1..=levels).rev().map(Subband::Detail))
        .collect();
    let mut out = Vec::new();
    for band in bands {
        let def = band.def();
        let mut best: Option<(Subband, f64)> = None;
        for &sb in &candidates {
            let (lo, hi) = wavelet::subband_range(sb, levels, sample_rate, mapping)?;
            let overlap = def.f_hi.min(hi) - def.f_lo.max(lo);
            if overlap > 0.0 && best.is_none_or(|(_, o)| overlap > o) {
                best = Some((sb, overlap));
            }
        }
        let (sb, _) = best.ok_or_else(|| {
            Error::param(format!("no sub-band overlaps the {} band", band.symbol()))
        })?;
        if !out.contains(&sb) {
            out.push(sb);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Stft,
    Dwt,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stft" => Ok(FeatureKind::Stft),
            "dwt" => Ok(FeatureKind::Dwt),
            _ => Err(Error::param(format!(
                "unknown feature kind {s:?} (stft or dwt)"
            ))),
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureKind::Stft => "stft",
            FeatureKind::Dwt => "dwt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Seeded shuffle of trial order within each class; epochs are taken
    /// trial by trial, so at most one trial per class straddles the split.
    TrialBlocked,
    /// Seeded shuffle of epochs within each class. Overlapping epochs of
    /// one trial land on both sides, which inflates test accuracy.
    Shuffled,
    /// Earliest epochs of each class train, the rest test.
    Chronological,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trial-blocked" => Ok(SplitMode::TrialBlocked),
            "shuffled" => Ok(SplitMode::Shuffled),
            "chronological" => Ok(SplitMode::Chronological),
            _ => Err(Error::param(format!(
                "unknown split {s:?} (trial-blocked, shuffled or chronological)"
            ))),
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitMode::TrialBlocked => "trial-blocked",
            SplitMode::Shuffled => "shuffled",
            SplitMode::Chronological => "chronological",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    /// Dominant bands; STFT features use them directly, DWT features map
    /// them to sub-bands unless `subbands` is given.
    pub bands: Vec<Band>,
    pub epoch: EpochConfig,
    pub stft: StftConfig,
    pub wavelet: WaveletSpec,
    pub subbands: Option<Vec<Subband>>,
    pub mapping: SubbandMapping,
    pub split: SplitMode,
    pub preprocess: PreprocessConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            kind: FeatureKind::Dwt,
            bands: vec![Band::Delta, Band::Alpha],
            epoch: EpochConfig::default(),
            stft: StftConfig::default(),
            wavelet: WaveletSpec::default(),
            subbands: None,
            mapping: SubbandMapping::PaperTable,
            split: SplitMode::TrialBlocked,
            preprocess: PreprocessConfig::default(),
        }
    }
}

impl FeatureConfig {
    pub fn resolved_subbands(&self, sample_rate: f64) -> Result<Vec<Subband>> {
        match &self.subbands {
            Some(s) => Ok(s.clone()),
            None => subbands_for_bands(&self.bands, self.wavelet.levels, sample_rate, self.mapping),
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match self.kind {
            FeatureKind::Stft => self
                .bands
                .iter()
                .map(|b| format!("{}_pct", b.symbol()))
                .collect(),
            FeatureKind::Dwt => DWT_STATS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

const DWT_STATS: [&str; 4] = ["min", "max", "mean", "sd"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochInfo {
    pub trial: usize,
    pub offset_s: f64,
}

/// Labelled epoch features with a fixed train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub kind: FeatureKind,
    pub channels: Vec<String>,
    pub feature_names: Vec<String>,
    /// channel × epoch × feature
    pub features: Array3<f64>,
    pub labels: Vec<Condition>,
    pub epochs: Vec<EpochInfo>,
    /// Sorted epoch indices.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FeatureDataset {
    pub fn n_epochs(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == label)
    }

    /// Epoch × feature matrix of one channel.
    pub fn channel_matrix(&self, channel: usize) -> ArrayView2<'_, f64> {
        self.features.slice(s![channel, .., ..])
    }

    /// Features of the given channels side by side, restricted to `rows`.
    pub fn combined(&self, channels: &[usize], rows: &[usize]) -> Array2<f64> {
        let d = self.feature_dim();
        let mut out = Array2::zeros((rows.len(), channels.len() * d));
        for (ci, &ch) in channels.iter().enumerate() {
            for (ri, &r) in rows.iter().enumerate() {
                for f in 0..d {
                    out[[ri, ci * d + f]] = self.features[[ch, r, f]];
                }
            }
        }
        out
    }

    pub fn labels_of(&self, rows: &[usize]) -> Vec<Condition> {
        rows.iter().map(|&r| self.labels[r]).collect()
    }

    pub fn class_count(&self, class: Condition) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    /// One row per (epoch, channel).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,trial,offset_s,channel");
        for n in &self.feature_names {
            s.push(',');
            s.push_str(n);
        }
        s.push_str(",label,split\n");
        let mut is_train = vec![false; self.n_epochs()];
        for &i in &self.train {
            is_train[i] = true;
        }
        for (e, &train) in is_train.iter().enumerate() {
            for (c, ch) in self.channels.iter().enumerate() {
                let info = self.epochs[e];
                let _ = write!(s, "{e},{},{},{ch}", info.trial, info.offset_s);
                for f in 0..self.feature_dim() {
                    let _ = write!(s, ",{}", self.features[[c, e, f]]);
                }
                let split = if train { "train" } else { "test" };
                let _ = writeln!(s, ",{},{split}", self.labels[e].short());
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Inverse of [`FeatureDataset::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader =
            csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::parse(path, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < 7 || header[..4] != ["epoch", "trial", "offset_s", "channel"] {
            return Err(Error::parse(path, "not a feature dataset CSV"));
        }
        let feature_names = header[4..header.len() - 2].to_vec();
        let kind = if feature_names.iter().map(String::as_str).eq(DWT_STATS) {
            FeatureKind::Dwt
        } else {
            FeatureKind::Stft
        };
        let d = feature_names.len();

        let mut channels: Vec<String> = Vec::new();
        let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        let mut epochs: Vec<Option<(EpochInfo, Condition, bool)>> = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
            let at = |msg: String| Error::parse(path, format!("line {}: {msg}", line + 2));
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|_| at(format!("bad number {:?}", &rec[i])))
            };
            let e: usize = rec[0].parse().map_err(|_| at("bad epoch index".into()))?;
            let trial: usize = rec[1].parse().map_err(|_| at("bad trial index".into()))?;
            let ch = match channels.iter().position(|c| c == &rec[3]) {
                Some(i) => i,
                None => {
                    channels.push(rec[3].to_string());
                    channels.len() - 1
                }
            };
            let feats = (4..4 + d).map(num).collect::<Result<Vec<_>>>()?;
            let label: Condition = rec[4 + d].parse().map_err(|_| at("bad label".into()))?;
            let train = match &rec[5 + d] {
                "train" => true,
                "test" => false,
                other => return Err(at(format!("bad split tag {other:?}"))),
            };
            if epochs.len() <= e {
                epochs.resize(e + 1, None);
            }
            epochs[e] = Some((
                EpochInfo {
                    trial,
                    offset_s: num(2)?,
                },
                label,
                train,
            ));
            rows.push((ch, e, feats));
        }
        let epochs: Vec<(EpochInfo, Condition, bool)> = epochs
            .into_iter()
            .enumerate()
            .map(|(i, e)| e.ok_or_else(|| Error::parse(path, format!("epoch {i} missing"))))
            .collect::<Result<_>>()?;
        if rows.len() != epochs.len() * channels.len() {
            return Err(Error::parse(path, "every epoch needs one row per channel"));
        }
        let mut features = Array3::zeros((channels.len(), epochs.len(), d));
        for (c, e, f) in rows {
            for (k, v) in f.into_iter().enumerate() {
                features[[c, e, k]] = v;
            }
        }
        Ok(FeatureDataset {
            kind,
            channels,
            feature_names,
            features,
            labels: epochs.iter().map(|e| e.1).collect(),
            train: (0..epochs.len()).filter(|&i| epochs[i].2).collect(),
            test: (0..epochs.len()).filter(|&i| !epochs[i].2).collect(),
            epochs: epochs.iter().map(|e| e.0).collect(),
        })
    }
}

/// Per-channel feature rows of one epoch according to `cfg`.
pub fn epoch_features(epoch: &Epoch, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    match cfg.kind {
        FeatureKind::Stft => stft_features(epoch, &cfg.bands, &cfg.stft),
        FeatureKind::Dwt => {
            let subbands = cfg.resolved_subbands(epoch.sample_rate as f64)?;
            dwt_features(epoch, &subbands, &cfg.wavelet)
        }
    }
}

struct EpochRow {
    info: EpochInfo,
    label: Condition,
    /// channel × feature
    values: Vec<Vec<f64>>,
}

fn recording_rows(rec: &Recording, label: Condition, cfg: &FeatureConfig) -> Result<Vec<EpochRow>> {
    let per_trial: Vec<Vec<EpochRow>> = rec
        .trials
        .par_iter()
        .enumerate()
        .map(|(t, trial)| {
            let rest = stage_slice(trial, Stage::Rest).map_err(|e| {
                Error::structural(format!("{} trial {t}: no Rest stage ({e})", rec.subject_id))
            })?;
            let rest = preprocess_for_classification(&rest, &cfg.preprocess)?;
            epoch_segment(&rest, &cfg.epoch, t, label)?
                .into_iter()
                .map(|ep| {
                    Ok(EpochRow {
                        info: EpochInfo {
                            trial: ep.trial,
                            offset_s: ep.offset_s,
                        },
                        label,
                        values: epoch_features(&ep, cfg)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

/// Builds the epoch dataset from the Rest stages of the two recordings.
///
/// Labels follow argument position: epochs of `two_d` are `TwoD` and epochs
/// of `three_d` are `ThreeD`; rows are ordered class, trial, then offset.
pub fn assemble_dataset(
    two_d: &Recording,
    three_d: &Recording,
    cfg: &FeatureConfig,
    seed: u64,
) -> Result<FeatureDataset> {
    if two_d.trials.len() != three_d.trials.len() {
        return Err(Error::structural(format!(
            "class sizes differ: {} vs {} trials",
            two_d.trials.len(),
            three_d.trials.len()
        )));
    }
    if two_d.trials.is_empty() {
        return Err(Error::structural("recordings contain no trials"));
    }
    if two_d.montage != three_d.montage {
        return Err(Error::structural("recordings use different montages"));
    }
    if two_d.sample_rate != three_d.sample_rate {
        return Err(Error::structural("recordings use different sample rates"));
    }
    if cfg.kind == FeatureKind::Stft && cfg.bands.is_empty() {
        return Err(Error::param(
            "STFT features need at least one dominant band",
        ));
    }
    let mut rows = recording_rows(two_d, Condition::TwoD, cfg)?;
    rows.extend(recording_rows(three_d, Condition::ThreeD, cfg)?);

    let channels = two_d.montage.channels().to_vec();
    let names = cfg.feature_names();
    let mut features = Array3::zeros((channels.len(), rows.len(), names.len()));
    for (e, row) in rows.iter().enumerate() {
        for (c, v) in row.values.iter().enumerate() {
            for (k, x) in v.iter().enumerate() {
                features[[c, e, k]] = *x;
            }
        }
    }
    let labels: Vec<Condition> = rows.iter().map(|r| r.label).collect();
    let trials: Vec<usize> = rows.iter().map(|r| r.info.trial).collect();
    let (train, test) = split_indices(&labels, &trials, cfg.split, seed);
    Ok(FeatureDataset {
        kind: cfg.kind,
        channels,
        feature_names: names,
        features,
        epochs: rows.iter().map(|r| r.info).collect(),
        labels,
        train,
        test,
    })
}

/// Per class, the first `ceil(n / 2)` epochs (in the order `mode` gives)
/// train and the rest test. `trials` holds each epoch's trial index. Both
/// lists come back sorted.
pub fn split_indices(
    labels: &[Condition],
    trials: &[usize],
    mode: SplitMode,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (k, class) in [Condition::TwoD, Condition::ThreeD].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        match mode {
            SplitMode::Shuffled => idx.shuffle(&mut rng),
            SplitMode::TrialBlocked => {
                let mut order: Vec<usize> = idx.iter().map(|&i| trials[i]).collect();
                order.sort_unstable();
                order.dedup();
                order.shuffle(&mut rng);
                let rank: std::collections::HashMap<usize, usize> =
                    order.iter().enumerate().map(|(r, &t)| (t, r)).collect();
                // stable: epochs keep their offset order inside a trial
                idx.sort_by_key(|&i| rank[&trials[i]]);
            }
            SplitMode::Chronological => {}
        }
        let n_train = idx.len().div_ceil(2);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
