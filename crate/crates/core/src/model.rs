//! Paradigm, montage and frequency-band domain types.
//!
//! A trial is one Relax / Watch / Rest run recorded on the 20-channel
//! montage. Stage boundaries are closed-open sample ranges derived from the
//! paradigm durations and the sample rate.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel labels of the cap in acquisition order. `Cz` is the reference.
pub const STANDARD_CHANNELS: [&str; 20] = [
    "Fp1", "Fpz", "Fp2", "F3", "F4", "F7", "F8", "C3", "C4", "Fz", "P3", "P4", "Pz", "O1", "O2",
    "T3", "T4", "T5", "T6", "Oz",
];

pub const REFERENCE_CHANNEL: &str = "Cz";

/// Labels accepted by [`Montage::new`]: the 10–20 positions (old T3–T6
/// naming plus the newer T7/T8/P7/P8 aliases).
const TEN_TWENTY_LABELS: [&str; 25] = [
    "Fp1", "Fpz", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz", "C4", "T4", "T5", "P3",
    "Pz", "P4", "T6", "O1", "Oz", "O2", "T7", "T8", "P7", "P8",
];

pub const DEFAULT_SAMPLE_RATE: u32 = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Montage {
    channels: Vec<String>,
    reference: String,
}

impl Montage {
    pub fn new(channels: Vec<String>, reference: impl Into<String>) -> Result<Self> {
        let reference = reference.into();
        if channels.len() != STANDARD_CHANNELS.len() {
            return Err(Error::structural(format!(
                "montage needs {} data channels, got {}",
                STANDARD_CHANNELS.len(),
                channels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in channels.iter().chain(std::iter::once(&reference)) {
            if !TEN_TWENTY_LABELS.contains(&label.as_str()) {
                return Err(Error::structural(format!(
                    "channel label {label:?} is not a 10-20 position"
                )));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::structural(format!(
                    "duplicate channel label {label:?}"
                )));
            }
        }
        Ok(Montage {
            channels,
            reference,
        })
    }

    pub fn standard() -> Self {
        Montage {
            channels: STANDARD_CHANNELS.iter().map(|c| c.to_string()).collect(),
            reference: REFERENCE_CHANNEL.to_string(),
        }
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn reference(&self) -> &str {
        &self.reference
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == label)
    }
}

/// The fixed 20-channel montage with `Cz` reference.
pub fn standard_montage() -> Montage {
    Montage::standard()
}

/// Viewing condition of a session. `TwoD` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    TwoD,
    ThreeD,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::TwoD, Condition::ThreeD];

    /// `+1` for `TwoD`, `-1` for `ThreeD`.
    pub fn sign(self) -> f64 {
        match self {
            Condition::TwoD => 1.0,
            Condition::ThreeD => -1.0,
        }
    }

    /// Inverse of [`Condition::sign`]; zero maps to the positive class.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Condition::TwoD
        } else {
            Condition::ThreeD
        }
    }

    pub fn other(self) -> Self {
        match self {
            Condition::TwoD => Condition::ThreeD,
            Condition::ThreeD => Condition::TwoD,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Condition::TwoD => "2d",
            Condition::ThreeD => "3d",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::TwoD => "TwoD",
            Condition::ThreeD => "ThreeD",
        })
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "twod" | "2d" => Ok(Condition::TwoD),
            "threed" | "3d" => Ok(Condition::ThreeD),
            _ => Err(Error::param(format!("unknown condition {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Relax,
    Watch,
    Rest,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Relax, Stage::Watch, Stage::Rest];
}

/// Durations of the three paradigm stages and the number of repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParadigmSpec {
    pub relax_s: f64,
    pub watch_s: f64,
    pub rest_s: f64,
    pub trials_per_condition: usize,
}

impl Default for ParadigmSpec {
    fn default() -> Self {
        ParadigmSpec {
            relax_s: 9.0,
            watch_s: 14.0,
            rest_s: 9.0,
            trials_per_condition: 15,
        }
    }
}

impl ParadigmSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in [
            ("relax", self.relax_s),
            ("watch", self.watch_s),
            ("rest", self.rest_s),
        ] {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::param(format!(
                    "{name} duration must be > 0, got {d}"
                )));
            }
        }
        if self.trials_per_condition == 0 {
            return Err(Error::param("trials_per_condition must be >= 1"));
        }
        Ok(())
    }

    pub fn total_s(&self) -> f64 {
        self.relax_s + self.watch_s + self.rest_s
    }

    pub fn duration_s(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Relax => self.relax_s,
            Stage::Watch => self.watch_s,
            Stage::Rest => self.rest_s,
        }
    }

    pub fn total_samples(&self, sample_rate: u32) -> usize {
        seconds_to_samples(self.total_s(), sample_rate)
    }

    /// Closed-open sample range of `stage` within a trial.
    pub fn stage_range(&self, stage: Stage, sample_rate: u32) -> Range<usize> {
        let relax_end = seconds_to_samples(self.relax_s, sample_rate);
        let watch_end = seconds_to_samples(self.relax_s + self.watch_s, sample_rate);
        let total = self.total_samples(sample_rate);
        match stage {
            Stage::Relax => 0..relax_end,
            Stage::Watch => relax_end..watch_end,
            Stage::Rest => watch_end..total,
        }
    }
}

pub(crate) fn seconds_to_samples(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

/// One repetition of the paradigm: channels × samples in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub samples: Array2<f64>,
    pub paradigm: ParadigmSpec,
    pub sample_rate: u32,
}

impl Trial {
    pub fn new(samples: Array2<f64>, paradigm: ParadigmSpec, sample_rate: u32) -> Result<Self> {
        let trial = Trial {
            samples,
            paradigm,
            sample_rate,
        };
        trial.check_shape(STANDARD_CHANNELS.len())?;
        Ok(trial)
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    /// Verifies row and column counts against the montage size and paradigm.
    pub fn check_shape(&self, n_channels: usize) -> Result<()> {
        if self.n_channels() != n_channels {
            return Err(Error::structural(format!(
                "trial has {} channel rows, expected {n_channels}",
                self.n_channels()
            )));
        }
        let expected = self.paradigm.total_samples(self.sample_rate);
        if self.n_samples() != expected {
            return Err(Error::structural(format!(
                "trial has {} samples, expected {expected} ({} s at {} Hz)",
                self.n_samples(),
                self.paradigm.total_s(),
                self.sample_rate
            )));
        }
        Ok(())
    }
}

/// A subject's condition-labelled session.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub condition: Condition,
    pub sample_rate: u32,
    pub montage: Montage,
    pub trials: Vec<Trial>,
}

impl Recording {
    pub fn paradigm(&self) -> Option<ParadigmSpec> {
        self.trials.first().map(|t| t.paradigm)
    }

    /// All structural invariant violations, one message per problem.
    pub fn structural_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.trials.is_empty() {
            problems.push("recording has no trials".to_string());
        }
        for (i, trial) in self.trials.iter().enumerate() {
            if trial.sample_rate != self.sample_rate {
                problems.push(format!(
                    "trial {i}: sample rate {} differs from recording rate {}",
                    trial.sample_rate, self.sample_rate
                ));
            }
            if let Err(e) = trial.check_shape(self.montage.len()) {
                problems.push(format!("trial {i}: {e}"));
            }
            if let Some((idx, _)) = trial.samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
                problems.push(format!(
                    "trial {i}: non-finite sample at channel {}, sample {}",
                    idx.0, idx.1
                ));
            }
        }
        problems
    }
}

/// One paradigm stage cut out of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSegment {
    pub stage: Stage,
    pub samples: Array2<f64>,
    pub sample_rate: u32,
}

impl StageSegment {
    pub fn duration_s(&self) -> f64 {
        self.samples.ncols() as f64 / self.sample_rate as f64
    }
}

/// Cuts the sample-exact range of `stage` out of `trial`.
pub fn stage_slice(trial: &Trial, stage: Stage) -> Result<StageSegment> {
    stage_slice_trimmed(trial, stage, 0.0)
}

/// Like [`stage_slice`] but drops `trim_s` seconds at both ends of the stage.
pub fn stage_slice_trimmed(trial: &Trial, stage: Stage, trim_s: f64) -> Result<StageSegment> {
    let expected = trial.paradigm.total_samples(trial.sample_rate);
    if trial.n_samples() != expected {
        return Err(Error::structural(format!(
            "trial has {} samples, expected {expected}",
            trial.n_samples()
        )));
    }
    if !(trim_s >= 0.0) {
        return Err(Error::param(format!("trim must be >= 0, got {trim_s}")));
    }
    let range = trial.paradigm.stage_range(stage, trial.sample_rate);
    let trim = seconds_to_samples(trim_s, trial.sample_rate);
    if 2 * trim >= range.len() {
        return Err(Error::param(format!(
            "trim of {trim_s} s leaves nothing of the {stage:?} stage"
        )));
    }
    let range = range.start + trim..range.end - trim;
    Ok(StageSegment {
        stage,
        samples: trial.samples.slice(s![.., range]).to_owned(),
        sample_rate: trial.sample_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub const ALL: [Band; 5] = [
        Band::Delta,
        Band::Theta,
        Band::Alpha,
        Band::Beta,
        Band::Gamma,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Canonical PSD integration range.
    pub fn def(self) -> BandDef {
        let (f_lo, f_hi) = match self {
            Band::Delta => (1.0, 4.0),
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 12.0),
            Band::Beta => (13.0, 30.0),
            Band::Gamma => (30.0, 49.0),
        };
        BandDef {
            band: self,
            f_lo,
            f_hi,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Band::Delta => "delta",
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
            Band::Gamma => "gamma",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "delta" | "d" => Ok(Band::Delta),
            "theta" | "t" => Ok(Band::Theta),
            "alpha" | "a" => Ok(Band::Alpha),
            "beta" | "b" => Ok(Band::Beta),
            "gamma" | "g" => Ok(Band::Gamma),
            _ => Err(Error::param(format!("unknown band {s:?}"))),
        }
    }
}

/// Frequency range of a band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDef {
    pub band: Band,
    pub f_lo: f64,
    pub f_hi: f64,
}

/// Range over which total power is integrated for normalisation.
pub const TOTAL_POWER_RANGE: (f64, f64) = (1.0, 49.0);

/// Which pair of stage segments a band-difference matrix compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComparisonStage {
    /// 2D before (Relax) minus 2D after (Rest).
    I,
    /// 3D before minus 3D after.
    II,
    /// 2D after minus 3D after.
    III,
}

impl ComparisonStage {
    pub const ALL: [ComparisonStage; 3] = [
        ComparisonStage::I,
        ComparisonStage::II,
        ComparisonStage::III,
    ];

    /// `(minuend, subtrahend)` segments of the difference.
    pub fn sides(self) -> ((Condition, Stage), (Condition, Stage)) {
        match self {
            ComparisonStage::I => (
                (Condition::TwoD, Stage::Relax),
                (Condition::TwoD, Stage::Rest),
            ),
            ComparisonStage::II => (
                (Condition::ThreeD, Stage::Relax),
                (Condition::ThreeD, Stage::Rest),
            ),
            ComparisonStage::III => (
                (Condition::TwoD, Stage::Rest),
                (Condition::ThreeD, Stage::Rest),
            ),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ComparisonStage::I => "I",
            ComparisonStage::II => "II",
            ComparisonStage::III => "III",
        }
    }
}

impl FromStr for ComparisonStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(ComparisonStage::I),
            "II" | "2" => Ok(ComparisonStage::II),
            "III" | "3" => Ok(ComparisonStage::III),
            _ => Err(Error::param(format!("unknown comparison stage {s:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial_of(n: usize) -> Trial {
        Trial {
            samples: Array2::from_shape_fn((20, n), |(c, t)| (c * n + t) as f64),
            paradigm: ParadigmSpec::default(),
            sample_rate: 512,
        }
    }

    #[test]
    fn standard_montage_layout() {
        let m = standard_montage();
        assert_eq!(m.len(), 20);
        assert_eq!(m.channels()[0], "Fp1");
        assert_eq!(m.channels()[19], "Oz");
        assert_eq!(m.reference(), "Cz");
        let unique: HashSet<_> = m.channels().iter().collect();
        assert_eq!(unique.len(), 20);
        assert_eq!(m, standard_montage());
        Montage::new(m.channels().to_vec(), "Cz").unwrap();
    }

    #[test]
    fn montage_rejects_bad_labels() {
        let mut ch: Vec<String> = STANDARD_CHANNELS.iter().map(|s| s.to_string()).collect();
        ch[3] = "Fp1".into();
        assert!(Montage::new(ch.clone(), "Cz").is_err());
        ch[3] = "XYZ".into();
        assert!(Montage::new(ch, "Cz").is_err());
        assert!(Montage::new(vec!["Fp1".into()], "Cz").is_err());
    }

    #[test]
    fn stage_lengths_at_512() {
        let t = trial_of(16384);
        assert_eq!(stage_slice(&t, Stage::Relax).unwrap().samples.ncols(), 4608);
        assert_eq!(stage_slice(&t, Stage::Watch).unwrap().samples.ncols(), 7168);
        let rest = stage_slice(&t, Stage::Rest).unwrap();
        assert_eq!(rest.samples.ncols(), 4608);
        assert_eq!(rest.samples[[0, 0]], 11776.0);
        assert_eq!(rest.samples[[0, 4607]], 16383.0);
        assert_eq!(t.paradigm.stage_range(Stage::Rest, 512), 11776..16384);
    }

    #[test]
    fn stages_partition_trial() {
        let t = trial_of(16384);
        let parts: Vec<_> = Stage::ALL
            .iter()
            .map(|&st| stage_slice(&t, st).unwrap().samples)
            .collect();
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let joined = ndarray::concatenate(ndarray::Axis(1), &views).unwrap();
        assert_eq!(joined, t.samples);
    }

    #[test]
    fn malformed_trial_length_is_reported() {
        let t = trial_of(16000);
        let err = stage_slice(&t, Stage::Rest).unwrap_err().to_string();
        assert!(err.contains("16000") && err.contains("16384"), "{err}");
        assert!(Trial::new(t.samples, ParadigmSpec::default(), 512).is_err());
    }

    #[test]
    fn trim_shrinks_both_ends() {
        let t = trial_of(16384);
        let seg = stage_slice_trimmed(&t, Stage::Relax, 0.5).unwrap();
        assert_eq!(seg.samples.ncols(), 4608 - 512);
        assert_eq!(seg.samples[[0, 0]], 256.0);
    }

    #[test]
    fn bands_cover_range_with_single_gap() {
        let defs: Vec<_> = Band::ALL.iter().map(|b| b.def()).collect();
        assert_eq!(defs[0].f_lo, TOTAL_POWER_RANGE.0);
        assert_eq!(defs[4].f_hi, TOTAL_POWER_RANGE.1);
        let mut gaps = Vec::new();
        for w in defs.windows(2) {
            assert!(w[0].f_lo < w[0].f_hi);
            assert!(w[0].f_hi <= w[1].f_lo, "overlap");
            if w[0].f_hi < w[1].f_lo {
                gaps.push((w[0].f_hi, w[1].f_lo));
            }
        }
        assert_eq!(gaps, vec![(12.0, 13.0)]);
    }

    #[test]
    fn comparison_sides() {
        assert_eq!(
            ComparisonStage::III.sides(),
            (
                (Condition::TwoD, Stage::Rest),
                (Condition::ThreeD, Stage::Rest)
            )
        );
        let ((c1, _), (c2, _)) = ComparisonStage::I.sides();
        assert_eq!(c1, c2);
    }
}
