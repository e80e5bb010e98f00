//! STFT spectrograms, PSD estimation, band power and dominant-band selection.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, BandDef, ComparisonStage, StageSegment, TOTAL_POWER_RANGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window_len: usize,
    /// Frame advance in samples. 1 gives an overlap of `window_len - 1`.
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_len: 512,
            hop: 1,
        }
    }
}

impl StftConfig {
    pub fn with_hop(hop: usize) -> Self {
        StftConfig {
            hop,
            ..Default::default()
        }
    }
}

/// Symmetric Hanning window without zero end points,
/// `w[n] = 0.5 (1 - cos(2 pi n / (L + 1)))` for `n = 1..=L`.
pub fn hanning(len: usize) -> Vec<f64> {
    (1..=len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / (len + 1) as f64).cos()))
        .collect()
}

/// Time × frequency grid of one-sided, window-energy normalised power.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// frames × bins
    pub values: Array2<f64>,
    pub freq_axis: Vec<f64>,
    /// Centre time of each frame in seconds.
    pub time_axis: Vec<f64>,
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: f64,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn bin_width(&self) -> f64 {
        self.sample_rate / self.window_len as f64
    }
}

struct FramePower {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    window_energy: f64,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FramePower {
    fn new(window_len: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(window_len);
        let window = hanning(window_len);
        // |X_k|^2 summed over all bins is L * sum((x w)^2)
        let window_energy = window.iter().map(|w| w * w).sum::<f64>() * window_len as f64;
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        FramePower {
            fft,
            window,
            window_energy,
            buf: vec![Complex64::default(); window_len],
            scratch,
        }
    }

    /// Adds the one-sided power of `frame` into `acc` (len L/2 + 1).
    fn accumulate(&mut self, frame: &[f64], acc: &mut [f64]) {
        let len = self.window.len();
        for ((b, &x), &w) in self.buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex64::new(x * w, 0.0);
        }
        self.fft
            .process_with_scratch(&mut self.buf, &mut self.scratch);
        let last = len / 2;
        for (k, a) in acc.iter_mut().enumerate() {
            let p = self.buf[k].norm_sqr() / self.window_energy;
            let one_sided = if k == 0 || (len.is_multiple_of(2) && k == last) {
                p
            } else {
                2.0 * p
            };
            *a += one_sided;
        }
    }
}

fn check_length(len: usize, cfg: &StftConfig) -> Result<()> {
    if cfg.window_len < 2 || cfg.hop == 0 {
        return Err(Error::param(format!(
            "window length {} and hop {} must be >= 2 and >= 1",
            cfg.window_len, cfg.hop
        )));
    }
    if len < cfg.window_len {
        return Err(Error::param(format!(
            "series of {len} samples is shorter than the {}-sample window",
            cfg.window_len
        )));
    }
    Ok(())
}

fn n_frames(len: usize, cfg: &StftConfig) -> usize {
    (len - cfg.window_len) / cfg.hop + 1
}

fn freq_axis(window_len: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / window_len as f64;
    (0..=window_len / 2).map(|k| k as f64 * df).collect()
}

/// Hanning-windowed STFT. Each frame holds `c_k |X_k|^2 / (L sum(w^2))` with
/// `c_k = 2` for bins strictly between DC and Nyquist, so a frame sums to the
/// windowed signal power: a unit sinusoid totals 0.5 on the positive side.
pub fn stft_spectrogram(series: &[f64], sample_rate: f64, cfg: &StftConfig) -> Result<Spectrogram> {
    check_length(series.len(), cfg)?;
    let frames = n_frames(series.len(), cfg);
    let bins = cfg.window_len / 2 + 1;
    let mut fp = FramePower::new(cfg.window_len);
    let mut values = Array2::<f64>::zeros((frames, bins));
    for (f, mut row) in values.rows_mut().into_iter().enumerate() {
        let start = f * cfg.hop;
        fp.accumulate(
            &series[start..start + cfg.window_len],
            row.as_slice_mut().expect("standard layout"),
        );
    }
    let half = cfg.window_len as f64 / 2.0;
    Ok(Spectrogram {
        values,
        freq_axis: freq_axis(cfg.window_len, sample_rate),
        time_axis: (0..frames)
            .map(|f| ((f * cfg.hop) as f64 + half) / sample_rate)
            .collect(),
        window_len: cfg.window_len,
        hop: cfg.hop,
        sample_rate,
    })
}

/// Power spectral density in µV²/Hz over `[0, Nyquist]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdCurve {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl PsdCurve {
    pub fn bin_width(&self) -> f64 {
        self.freqs.get(1).map_or(1.0, |f| f - self.freqs[0])
    }

    fn interpolate(&self, f: f64) -> f64 {
        let df = self.bin_width();
        let pos = (f - self.freqs[0]) / df;
        let i = (pos.floor() as usize).min(self.freqs.len() - 2);
        let t = pos - i as f64;
        self.power[i] * (1.0 - t) + self.power[i + 1] * t
    }

    pub fn argmax(&self) -> f64 {
        let (i, _) = self
            .power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty psd");
        self.freqs[i]
    }
}

/// Time average of the spectrogram frames divided by the bin width.
pub fn psd_from_spectrogram(spec: &Spectrogram) -> PsdCurve {
    let frames = spec.n_frames().max(1) as f64;
    let df = spec.bin_width();
    let power = spec
        .values
        .columns()
        .into_iter()
        .map(|c| c.sum() / frames / df)
        .collect();
    PsdCurve {
        freqs: spec.freq_axis.clone(),
        power,
    }
}

/// STFT PSD without materialising the spectrogram.
pub fn stft_psd(series: &[f64], sample_rate: f64, cfg: &StftConfig) -> Result<PsdCurve> {
    check_length(series.len(), cfg)?;
    let frames = n_frames(series.len(), cfg);
    let mut fp = FramePower::new(cfg.window_len);
    let mut acc = vec![0.0; cfg.window_len / 2 + 1];
    for f in 0..frames {
        let start = f * cfg.hop;
        fp.accumulate(&series[start..start + cfg.window_len], &mut acc);
    }
    let df = sample_rate / cfg.window_len as f64;
    Ok(PsdCurve {
        freqs: freq_axis(cfg.window_len, sample_rate),
        power: acc.into_iter().map(|a| a / frames as f64 / df).collect(),
    })
}

/// Trapezoidal integral of the PSD over `[f_lo, f_hi]`, with the PSD
/// linearly interpolated at edges that fall between bins.
pub fn band_power_range(psd: &PsdCurve, f_lo: f64, f_hi: f64) -> Result<f64> {
    let (min_f, max_f) = (psd.freqs[0], *psd.freqs.last().expect("non-empty psd"));
    if psd.freqs.len() < 2 || !(f_lo >= min_f && f_hi <= max_f && f_lo <= f_hi) {
        return Err(Error::param(format!(
            "band [{f_lo}, {f_hi}] Hz outside PSD range [{min_f}, {max_f}] Hz"
        )));
    }
    let mut knots = vec![(f_lo, psd.interpolate(f_lo))];
    knots.extend(
        psd.freqs
            .iter()
            .zip(&psd.power)
            .filter(|(f, _)| **f > f_lo && **f < f_hi)
            .map(|(f, p)| (*f, *p)),
    );
    knots.push((f_hi, psd.interpolate(f_hi)));
    Ok(knots
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum())
}

pub fn band_power(psd: &PsdCurve, band: &BandDef) -> Result<f64> {
    band_power_range(psd, band.f_lo, band.f_hi)
}

/// `100 · P_band / P_total` for the five canonical bands, with total power
/// integrated over 1–49 Hz.
pub fn normalized_band_powers(psd: &PsdCurve) -> Result<[f64; 5]> {
    let total = band_power_range(psd, TOTAL_POWER_RANGE.0, TOTAL_POWER_RANGE.1)?;
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "total 1-49 Hz power is zero; cannot normalise".into(),
        ));
    }
    let mut out = [0.0; 5];
    for band in Band::ALL {
        out[band.index()] = 100.0 * band_power(psd, &band.def())? / total;
    }
    Ok(out)
}

/// Channels × bands grid of normalised power percentages, or of their
/// signed differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPowerMatrix {
    pub label: String,
    pub channels: Vec<String>,
    pub values: Vec<[f64; 5]>,
}

impl BandPowerMatrix {
    pub fn get(&self, channel: &str, band: Band) -> Option<f64> {
        let i = self.channels.iter().position(|c| c == channel)?;
        Some(self.values[i][band.index()])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.values.len(), 5)
    }

    /// Channels as rows, bands as columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("channel");
        for b in Band::ALL {
            s.push(',');
            s.push_str(b.symbol());
        }
        s.push('\n');
        for (ch, row) in self.channels.iter().zip(&self.values) {
            s.push_str(ch);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Band-power matrix of one stage segment, one PSD per channel.
pub fn band_power_matrix(
    segment: &StageSegment,
    channels: &[String],
    label: impl Into<String>,
    cfg: &StftConfig,
) -> Result<BandPowerMatrix> {
    use rayon::prelude::*;
    if segment.samples.nrows() != channels.len() {
        return Err(Error::structural(format!(
            "segment has {} channels, {} labels given",
            segment.samples.nrows(),
            channels.len()
        )));
    }
    let fs = segment.sample_rate as f64;
    let values = (0..channels.len())
        .into_par_iter()
        .map(|c| {
            let row = segment.samples.row(c).to_vec();
            normalized_band_powers(&stft_psd(&row, fs, cfg)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BandPowerMatrix {
        label: label.into(),
        channels: channels.to_vec(),
        values,
    })
}

/// Element-wise `a - b`.
pub fn band_difference_matrix(a: &BandPowerMatrix, b: &BandPowerMatrix) -> Result<BandPowerMatrix> {
    if a.channels != b.channels {
        return Err(Error::structural(format!(
            "channel labels differ between {:?} and {:?}",
            a.label, b.label
        )));
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(ra, rb)| std::array::from_fn(|i| ra[i] - rb[i]))
        .collect();
    Ok(BandPowerMatrix {
        label: format!("{} - {}", a.label, b.label),
        channels: a.channels.clone(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregationRule {
    /// Threshold the cross-participant mean difference.
    Mean,
    /// A cell counts when more than half of the participants exceed the
    /// threshold with the sign of the mean.
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandSelectionConfig {
    /// In percentage points of normalised power.
    pub threshold: f64,
    pub min_channels: usize,
    pub rule: AggregationRule,
}

impl Default for BandSelectionConfig {
    fn default() -> Self {
        BandSelectionConfig {
            threshold: 2.0,
            min_channels: 3,
            rule: AggregationRule::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDifference {
    pub channel: String,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandFinding {
    pub band: Band,
    pub dominant: bool,
    pub meaningful: Vec<ChannelDifference>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominantBandReport {
    pub stage: Option<ComparisonStage>,
    pub participants: usize,
    pub config: BandSelectionConfig,
    pub selected: Vec<Band>,
    pub bands: Vec<BandFinding>,
    pub average: BandPowerMatrix,
}

/// Averages per-participant difference matrices and applies the threshold /
/// channel-count rule per band.
pub fn select_dominant_bands(
    diffs: &[BandPowerMatrix],
    cfg: &BandSelectionConfig,
) -> Result<DominantBandReport> {
    let first = diffs
        .first()
        .ok_or_else(|| Error::param("band selection needs at least one participant"))?;
    for d in diffs {
        if d.channels != first.channels {
            return Err(Error::structural(
                "participant matrices use different channels",
            ));
        }
    }
    let n = diffs.len() as f64;
    let values: Vec<[f64; 5]> = (0..first.channels.len())
        .map(|c| std::array::from_fn(|b| diffs.iter().map(|d| d.values[c][b]).sum::<f64>() / n))
        .collect();
    let average = BandPowerMatrix {
        label: format!("mean of {} participants", diffs.len()),
        channels: first.channels.clone(),
        values,
    };

    let meaningful = |c: usize, b: usize| -> bool {
        let mean = average.values[c][b];
        match cfg.rule {
            AggregationRule::Mean => mean.abs() > cfg.threshold,
            AggregationRule::Majority => {
                let agree = diffs
                    .iter()
                    .filter(|d| {
                        let v = d.values[c][b];
                        v.abs() > cfg.threshold && v.signum() == mean.signum()
                    })
                    .count();
                2 * agree > diffs.len()
            }
        }
    };

    let bands: Vec<BandFinding> = Band::ALL
        .iter()
        .map(|&band| {
            let meaningful: Vec<ChannelDifference> = (0..average.channels.len())
                .filter(|&c| meaningful(c, band.index()))
                .map(|c| ChannelDifference {
                    channel: average.channels[c].clone(),
                    difference: average.values[c][band.index()],
                })
                .collect();
            BandFinding {
                band,
                dominant: meaningful.len() >= cfg.min_channels,
                meaningful,
            }
        })
        .collect();
    Ok(DominantBandReport {
        stage: None,
        participants: diffs.len(),
        config: *cfg,
        selected: bands
            .iter()
            .filter(|f| f.dominant)
            .map(|f| f.band)
            .collect(),
        bands,
        average,
    })
}
