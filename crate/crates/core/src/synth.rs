//! Synthetic EEG sessions with known band content.
//!
//! Each channel is a sum over bands of `K` sinusoids (random frequency
//! inside the band, random phase) scaled to a target RMS, plus pink noise,
//! an optional 50 Hz line component and scheduled spikes.
//!
//! Seeds are derived with SplitMix64 from the spec seed and a path of
//! integers: oscillators from `(channel, band)`, so they are shared by
//! every stage, every trial and both conditions; amplitude jitter from
//! `(condition, trial, stage, channel, band)`; noise from
//! `(condition, trial, channel)`; line phase from `(condition, trial)`.
//! Two specs that differ only in envelopes therefore produce the same
//! waveforms up to amplitude, and identical specs give identically
//! distributed sessions whose only difference is the noise.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Band, ComparisonStage, Condition, Montage, ParadigmSpec, Recording, Stage, Trial,
};
use crate::preprocess::{butterworth_bandpass, FilterSpec, PreprocessConfig, LINE_FREQUENCY};
use crate::spectral::{normalized_band_powers, stft_psd, StftConfig};

const TAG_OSC: u64 = 1;
const TAG_JITTER: u64 = 2;
const TAG_NOISE: u64 = 3;
const TAG_LINE: u64 = 4;
const TAG_SUBJECT: u64 = 5;

/// Samples of pink-noise filter warm-up discarded before each trial.
const PINK_WARMUP: usize = 4096;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `seed` one SplitMix64 round per element.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |h, &p| splitmix(h ^ p))
}

fn stage_code(stage: Stage) -> u64 {
    match stage {
        Stage::Relax => 0,
        Stage::Watch => 1,
        Stage::Rest => 2,
    }
}

fn condition_code(c: Condition) -> u64 {
    match c {
        Condition::TwoD => 0,
        Condition::ThreeD => 1,
    }
}

/// Frequency range oscillators of `band` are drawn from: the band shrunk
/// by `min(1 Hz, 20 % of its width)` at each end so that most window
/// leakage stays inside the integration range.
pub fn oscillator_range(band: Band) -> (f64, f64) {
    let d = band.def();
    let margin = (0.2 * (d.f_hi - d.f_lo)).min(1.0);
    (d.f_lo + margin, d.f_hi - margin)
}

/// `k` distinct frequencies inside [`oscillator_range`], one per equal
/// slice of the range (stratified uniform), snapped to the DFT grid of an
/// `n`-sample stage so the sinusoids are orthogonal over it and their
/// powers add exactly.
fn oscillator_frequencies(
    rng: &mut ChaCha8Rng,
    band: Band,
    n: usize,
    fs: f64,
    k: usize,
) -> Vec<f64> {
    let (lo, hi) = oscillator_range(band);
    let step = fs / n as f64;
    let first = (lo / step).ceil() as usize;
    let last = (hi / step).floor() as usize;
    if last < first {
        return vec![0.5 * (lo + hi)];
    }
    let width = (hi - lo) / k as f64;
    let mut bins: Vec<usize> = Vec::with_capacity(k);
    for j in 0..k {
        let f = lo + width * (j as f64 + rng.random_range(0.0..1.0));
        let bin = ((f / step).round() as usize).clamp(first, last);
        // nearest free grid point, if the range has one left
        let free = (0..=last - first)
            .flat_map(|d| [bin.checked_sub(d), Some(bin + d)])
            .flatten()
            .find(|b| (first..=last).contains(b) && !bins.contains(b));
        if let Some(b) = free {
            bins.push(b);
        }
    }
    bins.sort_unstable();
    bins.into_iter().map(|b| b as f64 * step).collect()
}

/// Band RMS in µV per channel, one table per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEnvelopes {
    pub relax: Vec<[f64; 5]>,
    pub watch: Vec<[f64; 5]>,
    pub rest: Vec<[f64; 5]>,
}

impl StageEnvelopes {
    pub fn uniform(channels: usize, rms: [f64; 5]) -> Self {
        StageEnvelopes {
            relax: vec![rms; channels],
            watch: vec![rms; channels],
            rest: vec![rms; channels],
        }
    }

    pub fn stage(&self, stage: Stage) -> &[[f64; 5]] {
        match stage {
            Stage::Relax => &self.relax,
            Stage::Watch => &self.watch,
            Stage::Rest => &self.rest,
        }
    }

    pub fn stage_mut(&mut self, stage: Stage) -> &mut Vec<[f64; 5]> {
        match stage {
            Stage::Relax => &mut self.relax,
            Stage::Watch => &mut self.watch,
            Stage::Rest => &mut self.rest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub trial: usize,
    pub channel: String,
    pub time_s: f64,
    pub amplitude_uv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subject_id: String,
    pub seed: u64,
    pub envelopes: StageEnvelopes,
    /// RMS of the pink-noise component per trial and channel.
    pub pink_noise_uv: f64,
    /// Amplitude of the 50 Hz line component.
    pub line_noise_uv: f64,
    /// Relative SD of per-trial band amplitude fluctuation.
    pub trial_jitter: f64,
    #[serde(default)]
    pub spikes: Vec<Spike>,
    #[serde(default = "default_oscillators")]
    pub oscillators_per_band: usize,
}

fn default_oscillators() -> usize {
    5
}

impl SynthSpec {
    /// Everything zero: generates an all-zero session.
    pub fn silent(subject_id: impl Into<String>, channels: usize, seed: u64) -> Self {
        SynthSpec {
            subject_id: subject_id.into(),
            seed,
            envelopes: StageEnvelopes::uniform(channels, [0.0; 5]),
            pink_noise_uv: 0.0,
            line_noise_uv: 0.0,
            trial_jitter: 0.0,
            spikes: Vec::new(),
            oscillators_per_band: default_oscillators(),
        }
    }

    pub fn validate(&self, montage: &Montage, paradigm: &ParadigmSpec) -> Result<()> {
        let n = montage.len();
        for stage in [Stage::Relax, Stage::Watch, Stage::Rest] {
            let env = self.envelopes.stage(stage);
            if env.len() != n {
                return Err(Error::param(format!(
                    "{stage:?} envelopes list {} channels, montage has {n}",
                    env.len()
                )));
            }
            if let Some(v) = env
                .iter()
                .flatten()
                .find(|v| !(v.is_finite() && **v >= 0.0))
            {
                return Err(Error::param(format!(
                    "band amplitudes must be finite and >= 0, got {v}"
                )));
            }
        }
        for (what, v) in [
            ("pink noise", self.pink_noise_uv),
            ("line noise", self.line_noise_uv),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(format!(
                    "{what} level must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.trial_jitter) {
            return Err(Error::param(format!(
                "trial jitter must lie in [0, 1), got {}",
                self.trial_jitter
            )));
        }
        if self.oscillators_per_band == 0 {
            return Err(Error::param("need at least one oscillator per band"));
        }
        for s in &self.spikes {
            if montage.index_of(&s.channel).is_none() {
                return Err(Error::param(format!(
                    "spike on unknown channel {:?}",
                    s.channel
                )));
            }
            if s.trial >= paradigm.trials_per_condition {
                return Err(Error::param(format!(
                    "spike in trial {} of {}",
                    s.trial, paradigm.trials_per_condition
                )));
            }
            if !(s.time_s >= 0.0 && s.time_s < paradigm.total_s()) || !s.amplitude_uv.is_finite() {
                return Err(Error::param(format!(
                    "spike at {} s outside the trial",
                    s.time_s
                )));
            }
        }
        Ok(())
    }
}

/// Kellet's refined pink filter on unit white noise, scaled to `rms`.
fn pink_noise(rng: &mut ChaCha8Rng, n: usize, rms: f64) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out = Vec::with_capacity(n);
    for i in 0..n + PINK_WARMUP {
        let w: f64 = rng.sample(StandardNormal);
        b[0] = 0.99886 * b[0] + w * 0.055_517_9;
        b[1] = 0.99332 * b[1] + w * 0.075_075_9;
        b[2] = 0.96900 * b[2] + w * 0.153_852_0;
        b[3] = 0.86650 * b[3] + w * 0.310_485_6;
        b[4] = 0.55000 * b[4] + w * 0.532_952_2;
        b[5] = -0.7616 * b[5] - w * 0.016_898_0;
        let v = b.iter().sum::<f64>() + w * 0.5362;
        b[6] = w * 0.115_926;
        if i >= PINK_WARMUP {
            out.push(v);
        }
    }
    let mean = out.iter().sum::<f64>() / n.max(1) as f64;
    let sd = (out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64).sqrt();
    if sd > 0.0 {
        out.iter_mut().for_each(|v| *v = (*v - mean) * rms / sd);
    }
    out
}

/// Adds `amp sin(2 pi f t + phase)` over `out` using a rotating phasor.
fn add_sinusoid(out: &mut [f64], amp: f64, freq: f64, phase: f64, sample_rate: f64) {
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate;
    let (sw, cw) = w.sin_cos();
    let (mut s, mut c) = phase.sin_cos();
    for (i, v) in out.iter_mut().enumerate() {
        *v += amp * s;
        (s, c) = (s * cw + c * sw, c * cw - s * sw);
        // renormalise occasionally to stop drift of the phasor modulus
        if i % 1024 == 1023 {
            let r = (s * s + c * c).sqrt();
            s /= r;
            c /= r;
        }
    }
}

/// One channel of one trial.
fn channel_signal(
    spec: &SynthSpec,
    condition: Condition,
    paradigm: &ParadigmSpec,
    sample_rate: u32,
    trial: usize,
    channel: usize,
) -> Vec<f64> {
    let fs = sample_rate as f64;
    let total = paradigm.total_samples(sample_rate);
    let mut out = vec![0.0; total];
    let k = spec.oscillators_per_band;
    let cond = condition_code(condition);
    for stage in [Stage::Relax, Stage::Watch, Stage::Rest] {
        let range = paradigm.stage_range(stage, sample_rate);
        let st = stage_code(stage);
        for band in Band::ALL {
            let rms = spec.envelopes.stage(stage)[channel][band.index()];
            if rms == 0.0 {
                continue;
            }
            let b = band.index() as u64;
            let mut jitter_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                spec.seed,
                &[TAG_JITTER, cond, trial as u64, st, channel as u64, b],
            ));
            let z: f64 = jitter_rng.sample(StandardNormal);
            let factor = (1.0 + spec.trial_jitter * z).max(0.0);
            let amp = rms * factor * (2.0 / k as f64).sqrt();
            let mut osc_rng =
                ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[TAG_OSC, channel as u64, b]));
            let freqs = oscillator_frequencies(&mut osc_rng, band, range.len(), fs, k);
            let amp = amp * (k as f64 / freqs.len() as f64).sqrt();
            for f in freqs {
                let phase = osc_rng.random_range(0.0..2.0 * std::f64::consts::PI);
                add_sinusoid(&mut out[range.clone()], amp, f, phase, fs);
            }
        }
    }
    if spec.pink_noise_uv > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            spec.seed,
            &[TAG_NOISE, cond, trial as u64, channel as u64],
        ));
        for (v, p) in out
            .iter_mut()
            .zip(pink_noise(&mut rng, total, spec.pink_noise_uv))
        {
            *v += p;
        }
    }
    if spec.line_noise_uv > 0.0 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[TAG_LINE, cond, trial as u64]));
        let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        add_sinusoid(&mut out, spec.line_noise_uv, LINE_FREQUENCY, phase, fs);
    }
    out
}

fn spike_samples(
    spec: &SynthSpec,
    montage: &Montage,
    trial: usize,
    channel: usize,
    sample_rate: u32,
) -> Vec<(usize, f64)> {
    spec.spikes
        .iter()
        .filter(|s| s.trial == trial && montage.index_of(&s.channel) == Some(channel))
        .map(|s| {
            (
                (s.time_s * sample_rate as f64).floor() as usize,
                s.amplitude_uv,
            )
        })
        .collect()
}

pub fn generate_recording(
    spec: &SynthSpec,
    condition: Condition,
    paradigm: &ParadigmSpec,
    montage: &Montage,
    sample_rate: u32,
) -> Result<Recording> {
    paradigm.validate()?;
    spec.validate(montage, paradigm)?;
    let total = paradigm.total_samples(sample_rate);
    let trials = (0..paradigm.trials_per_condition)
        .into_par_iter()
        .map(|t| {
            let mut samples = Array2::zeros((montage.len(), total));
            for c in 0..montage.len() {
                let mut sig = channel_signal(spec, condition, paradigm, sample_rate, t, c);
                for (i, a) in spike_samples(spec, montage, t, c, sample_rate) {
                    sig[i] += a;
                }
                samples.row_mut(c).assign(&ndarray::ArrayView1::from(&sig));
            }
            Trial::new(samples, *paradigm, sample_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Recording {
        subject_id: spec.subject_id.clone(),
        condition,
        sample_rate,
        montage: montage.clone(),
        trials,
    })
}

/// Fixed context for calibration and presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSetup {
    pub paradigm: ParadigmSpec,
    pub sample_rate: u32,
    pub preprocess: PreprocessConfig,
    /// STFT used when measuring band powers during calibration.
    pub stft: StftConfig,
    /// Calibration stops once every target is met within this many points.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SynthSetup {
    fn default() -> Self {
        SynthSetup {
            paradigm: ParadigmSpec::default(),
            sample_rate: crate::model::DEFAULT_SAMPLE_RATE,
            preprocess: PreprocessConfig::default(),
            stft: StftConfig::default(),
            tolerance: 0.02,
            max_iter: 100,
        }
    }
}

/// Trial average of one channel, filtered like band-selection input.
fn averaged_filtered_channel(
    spec: &SynthSpec,
    condition: Condition,
    montage: &Montage,
    setup: &SynthSetup,
    channel: usize,
) -> Result<Vec<f64>> {
    let fs = setup.sample_rate as f64;
    let n_trials = setup.paradigm.trials_per_condition;
    let total = setup.paradigm.total_samples(setup.sample_rate);
    let mut avg = vec![0.0; total];
    for t in 0..n_trials {
        let mut sig = channel_signal(
            spec,
            condition,
            &setup.paradigm,
            setup.sample_rate,
            t,
            channel,
        );
        for (i, a) in spike_samples(spec, montage, t, channel, setup.sample_rate) {
            sig[i] += a;
        }
        for (a, v) in avg.iter_mut().zip(sig) {
            *a += v / n_trials as f64;
        }
    }
    let notch = FilterSpec::notch(LINE_FREQUENCY, setup.preprocess.notch_q).design(fs)?;
    let (lo, hi) = setup.preprocess.band_selection_band;
    let bandpass = butterworth_bandpass(setup.preprocess.filter_order, lo, hi, fs)?;
    Ok(bandpass.filtfilt(&notch.filtfilt(&avg)))
}

fn powers_of(series: &[f64], stage: Stage, setup: &SynthSetup) -> Result<[f64; 5]> {
    let range = setup.paradigm.stage_range(stage, setup.sample_rate);
    normalized_band_powers(&stft_psd(
        &series[range],
        setup.sample_rate as f64,
        &setup.stft,
    )?)
}

/// Rescales `stage` envelopes of `channel` in the listed bands until the
/// measured normalised powers (after trial averaging and band-selection
/// filtering) hit `targets`.
///
/// The averaged, filtered signal is linear in each band's amplitude, so it
/// is decomposed once into a fixed part and one unit-amplitude part per
/// adjusted band; iterations only recombine and re-measure.
pub fn calibrate_channel(
    spec: &mut SynthSpec,
    condition: Condition,
    montage: &Montage,
    setup: &SynthSetup,
    stage: Stage,
    channel: usize,
    targets: &[(Band, f64)],
) -> Result<[f64; 5]> {
    let label = &montage.channels()[channel];
    let total_target: f64 = targets.iter().map(|t| t.1).sum();
    if let Some((b, t)) = targets.iter().find(|t| !(t.1 > 0.0)) {
        return Err(Error::param(format!(
            "infeasible shift on {label}: {} would need {t:.2}% normalised power",
            b.symbol()
        )));
    }
    if total_target >= 100.0 {
        return Err(Error::param(format!(
            "infeasible shift on {label}: targets sum to {total_target:.1}%"
        )));
    }

    let mut fixed_spec = spec.clone();
    for (b, _) in targets {
        fixed_spec.envelopes.stage_mut(stage)[channel][b.index()] = 0.0;
    }
    let fixed = averaged_filtered_channel(&fixed_spec, condition, montage, setup, channel)?;
    let units = targets
        .iter()
        .map(|(b, _)| {
            let mut unit = SynthSpec::silent(&spec.subject_id, montage.len(), spec.seed);
            unit.trial_jitter = spec.trial_jitter;
            unit.oscillators_per_band = spec.oscillators_per_band;
            unit.envelopes.stage_mut(stage)[channel][b.index()] = 1.0;
            averaged_filtered_channel(&unit, condition, montage, setup, channel)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rms: Vec<f64> = targets
        .iter()
        .map(|(b, _)| spec.envelopes.stage(stage)[channel][b.index()])
        .map(|r| if r > 0.0 { r } else { 1.0 })
        .collect();
    let mut combined = vec![0.0; fixed.len()];
    for _ in 0..setup.max_iter {
        combined.copy_from_slice(&fixed);
        for (u, r) in units.iter().zip(&rms) {
            for (c, v) in combined.iter_mut().zip(u) {
                *c += r * v;
            }
        }
        let measured = powers_of(&combined, stage, setup)?;
        let worst = targets
            .iter()
            .map(|(b, t)| (measured[b.index()] - t).abs())
            .fold(0.0, f64::max);
        if worst <= setup.tolerance {
            for ((b, _), r) in targets.iter().zip(&rms) {
                spec.envelopes.stage_mut(stage)[channel][b.index()] = *r;
            }
            return Ok(measured);
        }
        for ((b, t), r) in targets.iter().zip(rms.iter_mut()) {
            let m = measured[b.index()].max(1e-9);
            *r *= (t / m).sqrt();
            if *r < 1e-9 {
                return Err(Error::param(format!(
                    "infeasible shift on {label}: the noise floor alone exceeds the {} target of {t:.2}%",
                    b.symbol()
                )));
            }
        }
    }
    Err(Error::param(format!(
        "infeasible shift on {label}: calibration did not reach the targets in {} iterations",
        setup.max_iter
    )))
}

/// Achieved Stage III difference on an injected channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelShift {
    pub channel: String,
    /// `R2a - R3a` per band, in points.
    pub difference: [f64; 5],
}

#[derive(Debug, Clone)]
pub struct Stage3Pair {
    pub two_d: Recording,
    pub three_d: Recording,
    pub two_d_spec: SynthSpec,
    pub three_d_spec: SynthSpec,
    /// As measured by the calibration loop.
    pub achieved: Vec<ChannelShift>,
}

/// TwoD and ThreeD sessions whose Rest stages differ by `R2a - R3a` of
/// `delta_shift` δ points and `alpha_shift` α points on `channels`.
pub fn make_stage3_pair(
    base: &SynthSpec,
    delta_shift: f64,
    alpha_shift: f64,
    channels: &[String],
    montage: &Montage,
    setup: &SynthSetup,
) -> Result<Stage3Pair> {
    let mut idx = Vec::new();
    for ch in channels {
        let i = montage
            .index_of(ch)
            .ok_or_else(|| Error::param(format!("channel {ch:?} is not in the montage")))?;
        idx.push(i);
    }
    base.validate(montage, &setup.paradigm)?;
    let mut three = base.clone();
    let mut achieved = Vec::new();
    for (&c, label) in idx.iter().zip(channels) {
        let two = powers_of(
            &averaged_filtered_channel(base, Condition::TwoD, montage, setup, c)?,
            Stage::Rest,
            setup,
        )?;
        let targets = [
            (Band::Delta, two[Band::Delta.index()] - delta_shift),
            (Band::Alpha, two[Band::Alpha.index()] - alpha_shift),
        ];
        let three_p = calibrate_channel(
            &mut three,
            Condition::ThreeD,
            montage,
            setup,
            Stage::Rest,
            c,
            &targets,
        )?;
        achieved.push(ChannelShift {
            channel: label.clone(),
            difference: std::array::from_fn(|b| two[b] - three_p[b]),
        });
    }
    Ok(Stage3Pair {
        two_d: generate_recording(
            base,
            Condition::TwoD,
            &setup.paradigm,
            montage,
            setup.sample_rate,
        )?,
        three_d: generate_recording(
            &three,
            Condition::ThreeD,
            &setup.paradigm,
            montage,
            setup.sample_rate,
        )?,
        two_d_spec: base.clone(),
        three_d_spec: three,
        achieved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Stage I: the 2D Relax stage carries extra δ on frontal channels and
    /// less on parietal ones, relative to 2D Rest.
    Stage1Delta,
    /// Stage III: δ +4 and α −5 points (`R2a - R3a`) on six channels.
    Stage3PaperLike,
    /// Both conditions drawn from the same spec.
    Null,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Stage1Delta, Preset::Stage3PaperLike, Preset::Null];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Stage1Delta => "stage1-delta",
            Preset::Stage3PaperLike => "stage3-paper-like",
            Preset::Null => "null",
        }
    }

    /// The comparison the preset is built to exercise.
    pub fn stage(self) -> ComparisonStage {
        match self {
            Preset::Stage1Delta => ComparisonStage::I,
            Preset::Stage3PaperLike | Preset::Null => ComparisonStage::III,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::param(format!(
                    "unknown preset {s:?}; available: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Typical resting band RMS, µV: δ, θ, α, β, γ.
pub const BASELINE_RMS: [f64; 5] = [8.0, 5.0, 9.0, 4.0, 1.5];
pub const STAGE3_CHANNELS: [&str; 6] = ["Fp1", "F8", "P3", "O2", "T5", "T6"];
pub const STAGE3_DELTA_SHIFT: f64 = 4.0;
pub const STAGE3_ALPHA_SHIFT: f64 = -5.0;
pub const STAGE1_RAISED: [&str; 3] = ["F7", "F8", "Fz"];
pub const STAGE1_LOWERED: [&str; 3] = ["P3", "P4", "Pz"];
pub const STAGE1_DELTA_SHIFT: f64 = 4.0;

/// Subject baseline: per-channel, per-band factors in [0.8, 1.2] around
/// [`BASELINE_RMS`]; watching lowers α and raises β.
pub fn baseline_spec(subject_id: &str, seed: u64, montage: &Montage) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_SUBJECT]));
    let rest: Vec<[f64; 5]> = (0..montage.len())
        .map(|_| std::array::from_fn(|b| BASELINE_RMS[b] * rng.random_range(0.8..1.2)))
        .collect();
    let watch = rest
        .iter()
        .map(|r| {
            let mut w = *r;
            w[Band::Alpha.index()] *= 0.6;
            w[Band::Beta.index()] *= 1.3;
            w
        })
        .collect();
    SynthSpec {
        subject_id: subject_id.to_string(),
        seed,
        envelopes: StageEnvelopes {
            relax: rest.clone(),
            watch,
            rest,
        },
        pink_noise_uv: 0.5,
        line_noise_uv: 3.0,
        trial_jitter: 0.01,
        spikes: Vec::new(),
        oscillators_per_band: default_oscillators(),
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSubject {
    pub two_d: Recording,
    pub three_d: Recording,
    pub two_d_spec: SynthSpec,
    pub three_d_spec: SynthSpec,
}

/// Ground truth recorded next to a generated study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyInfo {
    pub preset: Preset,
    pub seed: u64,
    pub stage: ComparisonStage,
    pub subjects: Vec<String>,
    pub injected_channels: Vec<String>,
    /// Intended difference (first side minus second side) per band.
    pub shifts: [f64; 5],
}

pub fn generate_preset(
    preset: Preset,
    seed: u64,
    n_subjects: usize,
    setup: &SynthSetup,
) -> Result<(StudyInfo, Vec<SyntheticSubject>)> {
    if n_subjects == 0 {
        return Err(Error::param("a study needs at least one subject"));
    }
    let montage = Montage::standard();
    let names: Vec<String> = (1..=n_subjects).map(|i| format!("S{i:02}")).collect();
    let subjects = names
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let base = baseline_spec(id, derive_seed(seed, &[TAG_SUBJECT, i as u64]), &montage);
            preset_subject(preset, base, &montage, setup)
        })
        .collect::<Result<Vec<_>>>()?;
    let (injected, shifts): (Vec<&str>, [f64; 5]) = match preset {
        Preset::Stage3PaperLike => {
            let mut s = [0.0; 5];
            s[Band::Delta.index()] = STAGE3_DELTA_SHIFT;
            s[Band::Alpha.index()] = STAGE3_ALPHA_SHIFT;
            (STAGE3_CHANNELS.to_vec(), s)
        }
        Preset::Stage1Delta => {
            let mut s = [0.0; 5];
            s[Band::Delta.index()] = STAGE1_DELTA_SHIFT;
            (
                STAGE1_RAISED
                    .iter()
                    .chain(&STAGE1_LOWERED)
                    .copied()
                    .collect(),
                s,
            )
        }
        Preset::Null => (Vec::new(), [0.0; 5]),
    };
    Ok((
        StudyInfo {
            preset,
            seed,
            stage: preset.stage(),
            subjects: names,
            injected_channels: injected.iter().map(|s| s.to_string()).collect(),
            shifts,
        },
        subjects,
    ))
}

fn preset_subject(
    preset: Preset,
    base: SynthSpec,
    montage: &Montage,
    setup: &SynthSetup,
) -> Result<SyntheticSubject> {
    let generate = |spec: &SynthSpec, c: Condition| {
        generate_recording(spec, c, &setup.paradigm, montage, setup.sample_rate)
    };
    match preset {
        Preset::Null => Ok(SyntheticSubject {
            two_d: generate(&base, Condition::TwoD)?,
            three_d: generate(&base, Condition::ThreeD)?,
            two_d_spec: base.clone(),
            three_d_spec: base,
        }),
        Preset::Stage3PaperLike => {
            let channels: Vec<String> = STAGE3_CHANNELS.iter().map(|s| s.to_string()).collect();
            let pair = make_stage3_pair(
                &base,
                STAGE3_DELTA_SHIFT,
                STAGE3_ALPHA_SHIFT,
                &channels,
                montage,
                setup,
            )?;
            Ok(SyntheticSubject {
                two_d: pair.two_d,
                three_d: pair.three_d,
                two_d_spec: pair.two_d_spec,
                three_d_spec: pair.three_d_spec,
            })
        }
        Preset::Stage1Delta => {
            // R2b - R2a = ±shift in δ, paid for equally by θ, α and β so
            // that none of them moves by more than a third of the shift
            let mut two = base.clone();
            for (labels, sign) in [(&STAGE1_RAISED, 1.0), (&STAGE1_LOWERED, -1.0)] {
                for label in labels.iter() {
                    let c = montage.index_of(label).expect("standard channel");
                    let rest = powers_of(
                        &averaged_filtered_channel(&base, Condition::TwoD, montage, setup, c)?,
                        Stage::Rest,
                        setup,
                    )?;
                    let shift = sign * STAGE1_DELTA_SHIFT;
                    let targets = [
                        (Band::Delta, rest[Band::Delta.index()] + shift),
                        (Band::Theta, rest[Band::Theta.index()] - shift / 3.0),
                        (Band::Alpha, rest[Band::Alpha.index()] - shift / 3.0),
                        (Band::Beta, rest[Band::Beta.index()] - shift / 3.0),
                    ];
                    calibrate_channel(
                        &mut two,
                        Condition::TwoD,
                        montage,
                        setup,
                        Stage::Relax,
                        c,
                        &targets,
                    )?;
                }
            }
            Ok(SyntheticSubject {
                two_d: generate(&two, Condition::TwoD)?,
                three_d: generate(&base, Condition::ThreeD)?,
                two_d_spec: two,
                three_d_spec: base,
            })
        }
    }
}
