//! Orthogonal Daubechies DWT with periodic extension.
//!
//! Filters are built by spectral factorisation of the Daubechies polynomial,
//! so any index from 1 (Haar) upward is available. A level whose input has
//! odd length transforms the leading even part and carries the final sample
//! into the approximation unchanged; the transform therefore stays
//! orthonormal (energy preserving) for every length.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_FAMILY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletSpec {
    /// Daubechies index; 1 is the Haar wavelet.
    pub family: usize,
    pub levels: usize,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        WaveletSpec {
            family: 1,
            levels: 7,
        }
    }
}

impl WaveletSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_FAMILY).contains(&self.family) {
            return Err(Error::param(format!(
                "Daubechies index must be in 1..={MAX_FAMILY}, got {}",
                self.family
            )));
        }
        if self.levels == 0 {
            return Err(Error::param("decomposition needs at least one level"));
        }
        Ok(())
    }
}

/// Scaling (low-pass) and wavelet (high-pass) filter pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub lowpass: Vec<f64>,
    pub highpass: Vec<f64>,
}

impl FilterBank {
    pub fn daubechies(index: usize) -> Result<Self> {
        WaveletSpec {
            family: index,
            levels: 1,
        }
        .validate()?;
        let lowpass = daubechies_scaling(index);
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * lowpass[len - 1 - k]
            })
            .collect();
        Ok(FilterBank { lowpass, highpass })
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Minimum-phase Daubechies scaling filter with `2 * n` taps, sum √2.
fn daubechies_scaling(n: usize) -> Vec<f64> {
    // Q(y) = sum_k C(n-1+k, k) y^k with y = (2 - z - 1/z) / 4
    let q: Vec<f64> = (0..n).map(|k| binomial(n - 1 + k, k)).collect();
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    let mul = |poly: &mut Vec<Complex64>, root: Complex64| {
        // multiply by (1 - root z^-1)
        let mut next = vec![Complex64::default(); poly.len() + 1];
        for (i, &c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * root;
        }
        *poly = next;
    };
    for _ in 0..n {
        mul(&mut poly, Complex64::new(-1.0, 0.0));
    }
    for y in polynomial_roots(&q) {
        let b = Complex64::new(2.0, 0.0) - 4.0 * y;
        let disc = (b * b - 4.0).sqrt();
        let z1 = (b + disc) / 2.0;
        let z2 = (b - disc) / 2.0;
        mul(&mut poly, if z1.norm() < z2.norm() { z1 } else { z2 });
    }
    let taps: Vec<f64> = poly.iter().map(|c| c.re).collect();
    let sum: f64 = taps.iter().sum();
    taps.iter()
        .map(|t| t * std::f64::consts::SQRT_2 / sum)
        .collect()
}

/// Roots of `sum c[k] x^k` by Durand–Kerner iteration followed by Newton
/// polishing.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let lead = coeffs[degree];
    let monic: Vec<Complex64> = coeffs
        .iter()
        .map(|c| Complex64::new(c / lead, 0.0))
        .collect();
    let eval = |x: Complex64| {
        monic
            .iter()
            .rev()
            .fold(Complex64::default(), |acc, &c| acc * x + c)
    };
    let deriv = |x: Complex64| {
        monic
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::default(), |acc, (k, &c)| acc * x + c * k as f64)
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..4 {
            let d = deriv(*r);
            if d.norm() > 0.0 {
                *r -= eval(*r) / d;
            }
        }
    }
    roots
}

/// Detail series D1..DL (finest first) and the level-L approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwtCoeffs {
    pub details: Vec<Vec<f64>>,
    pub approximation: Vec<f64>,
    pub spec: WaveletSpec,
    pub original_len: usize,
}

impl DwtCoeffs {
    /// `(approximation_len, detail_len)` produced at each level.
    pub fn level_lengths(original_len: usize, levels: usize) -> Vec<(usize, usize)> {
        let mut n = original_len;
        (0..levels)
            .map(|_| {
                let lens = (n.div_ceil(2), n / 2);
                n = lens.0;
                lens
            })
            .collect()
    }

    pub fn detail(&self, level: usize) -> Option<&[f64]> {
        level
            .checked_sub(1)
            .and_then(|i| self.details.get(i))
            .map(Vec::as_slice)
    }

    pub fn energy(&self) -> f64 {
        self.details
            .iter()
            .flatten()
            .chain(&self.approximation)
            .map(|v| v * v)
            .sum()
    }
}

fn analysis_step(x: &[f64], bank: &FilterBank) -> (Vec<f64>, Vec<f64>) {
    let even = x.len() - x.len() % 2;
    let half = even / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for i in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for (k, (&h, &g)) in bank.lowpass.iter().zip(&bank.highpass).enumerate() {
            let v = x[(2 * i + k) % even];
            a += h * v;
            d += g * v;
        }
        approx[i] = a;
        detail[i] = d;
    }
    if even < x.len() {
        approx.push(x[even]);
    }
    (approx, detail)
}

fn synthesis_step(approx: &[f64], detail: &[f64], out_len: usize, bank: &FilterBank) -> Vec<f64> {
    let even = out_len - out_len % 2;
    let mut x = vec![0.0; out_len];
    for i in 0..detail.len() {
        for (k, (&h, &g)) in bank.lowpass.iter().zip(&bank.highpass).enumerate() {
            x[(2 * i + k) % even] += approx[i] * h + detail[i] * g;
        }
    }
    if even < out_len {
        x[even] = approx[detail.len()];
    }
    x
}

/// Multi-level cascade: each approximation is split again.
pub fn dwt_decompose(series: &[f64], spec: &WaveletSpec) -> Result<DwtCoeffs> {
    spec.validate()?;
    let min_len = 1usize << spec.levels.min(usize::BITS as usize - 1);
    if series.len() < min_len {
        return Err(Error::param(format!(
            "{} samples is too short for {} levels (need >= {min_len})",
            series.len(),
            spec.levels
        )));
    }
    let bank = FilterBank::daubechies(spec.family)?;
    let mut approx = series.to_vec();
    let mut details = Vec::with_capacity(spec.levels);
    for _ in 0..spec.levels {
        let (a, d) = analysis_step(&approx, &bank);
        details.push(d);
        approx = a;
    }
    Ok(DwtCoeffs {
        details,
        approximation: approx,
        spec: *spec,
        original_len: series.len(),
    })
}

/// Inverse cascade.
pub fn dwt_reconstruct(coeffs: &DwtCoeffs) -> Result<Vec<f64>> {
    coeffs.spec.validate()?;
    let lengths = DwtCoeffs::level_lengths(coeffs.original_len, coeffs.spec.levels);
    if coeffs.details.len() != coeffs.spec.levels {
        return Err(Error::structural(format!(
            "{} detail series for {} levels",
            coeffs.details.len(),
            coeffs.spec.levels
        )));
    }
    for (level, ((_, d_len), d)) in lengths.iter().zip(&coeffs.details).enumerate() {
        if d.len() != *d_len {
            return Err(Error::structural(format!(
                "D{} has {} coefficients, expected {d_len}",
                level + 1,
                d.len()
            )));
        }
    }
    let a_len = lengths.last().map_or(coeffs.original_len, |l| l.0);
    if coeffs.approximation.len() != a_len {
        return Err(Error::structural(format!(
            "A{} has {} coefficients, expected {a_len}",
            coeffs.spec.levels,
            coeffs.approximation.len()
        )));
    }
    let bank = FilterBank::daubechies(coeffs.spec.family)?;
    let mut approx = coeffs.approximation.clone();
    for level in (0..coeffs.spec.levels).rev() {
        let out_len = if level == 0 {
            coeffs.original_len
        } else {
            lengths[level - 1].0
        };
        approx = synthesis_step(&approx, &coeffs.details[level], out_len, &bank);
    }
    Ok(approx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subband {
    /// Detail coefficients of the given level (1 = finest).
    Detail(usize),
    /// Approximation coefficients at the deepest level.
    Approximation,
}

impl Subband {
    pub fn coefficients<'a>(&self, coeffs: &'a DwtCoeffs) -> Option<&'a [f64]> {
        match self {
            Subband::Detail(k) => coeffs.detail(*k),
            Subband::Approximation => Some(&coeffs.approximation),
        }
    }

    pub fn label(&self, levels: usize) -> String {
        match self {
            Subband::Detail(k) => format!("D{k}"),
            Subband::Approximation => format!("A{levels}"),
        }
    }
}

impl std::str::FromStr for Subband {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_uppercase();
        if let Some(rest) = s.strip_prefix('D') {
            rest.parse()
                .map(Subband::Detail)
                .map_err(|_| Error::param(format!("bad sub-band {s:?}")))
        } else if s.starts_with('A') {
            Ok(Subband::Approximation)
        } else {
            Err(Error::param(format!("bad sub-band {s:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubbandMapping {
    /// Dyadic ranges for the actual sample rate.
    Standard,
    /// The seven-level table used for band alignment, independent of the
    /// sample rate (D1 = 256–512 Hz down to A7 = 0–4 Hz).
    PaperTable,
}

const TABLE_RANGES: [(f64, f64); 7] = [
    (256.0, 512.0),
    (128.0, 256.0),
    (64.0, 128.0),
    (32.0, 64.0),
    (16.0, 32.0),
    (8.0, 16.0),
    (4.0, 8.0),
];

/// Nominal frequency range of a sub-band in Hz.
pub fn subband_range(
    band: Subband,
    levels: usize,
    sample_rate: f64,
    mapping: SubbandMapping,
) -> Result<(f64, f64)> {
    match (mapping, band) {
        (_, Subband::Detail(k)) if k == 0 || k > levels => {
            Err(Error::param(format!("level {k} outside 1..={levels}")))
        }
        (SubbandMapping::Standard, Subband::Detail(k)) => Ok((
            sample_rate / 2f64.powi(k as i32 + 1),
            sample_rate / 2f64.powi(k as i32),
        )),
        (SubbandMapping::Standard, Subband::Approximation) => {
            Ok((0.0, sample_rate / 2f64.powi(levels as i32 + 1)))
        }
        (SubbandMapping::PaperTable, _) if levels != 7 => Err(Error::param(
            "the tabulated mapping is defined for 7 levels only",
        )),
        (SubbandMapping::PaperTable, Subband::Detail(k)) => Ok(TABLE_RANGES[k - 1]),
        (SubbandMapping::PaperTable, Subband::Approximation) => Ok((0.0, 4.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-50.0..50.0)).collect()
    }

    #[test]
    fn haar_and_db2_taps() {
        let h = FilterBank::daubechies(1).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(h.lowpass.iter().all(|v| (v - r).abs() < 1e-15));
        assert_eq!(h.highpass.len(), 2);
        assert!((h.highpass[0] - r).abs() < 1e-15 && (h.highpass[1] + r).abs() < 1e-15);

        let s3 = 3f64.sqrt();
        let d = 4.0 * 2f64.sqrt();
        let want = [
            (1.0 + s3) / d,
            (3.0 + s3) / d,
            (3.0 - s3) / d,
            (1.0 - s3) / d,
        ];
        let got = FilterBank::daubechies(2).unwrap().lowpass;
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn db4_matches_published_taps() {
        let want = [
            0.230_377_813_308_9,
            0.714_846_570_552_5,
            0.630_880_767_929_6,
            -0.027_983_769_416_9,
            -0.187_034_811_719_1,
            0.030_841_381_835_6,
            0.032_883_011_666_9,
            -0.010_597_401_785_1,
        ];
        let got = FilterBank::daubechies(4).unwrap().lowpass;
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-10, "{g} vs {w}");
        }
    }

    #[test]
    fn filters_are_orthonormal() {
        for n in 1..=MAX_FAMILY {
            let h = FilterBank::daubechies(n).unwrap().lowpass;
            assert_eq!(h.len(), 2 * n);
            for shift in (0..h.len()).step_by(2) {
                let dot: f64 = (0..h.len() - shift).map(|k| h[k] * h[k + shift]).sum();
                let want = if shift == 0 { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "db{n} shift {shift}: {dot}");
            }
        }
        assert!(FilterBank::daubechies(0).is_err());
        assert!(FilterBank::daubechies(MAX_FAMILY + 1).is_err());
    }

    #[test]
    fn dyadic_lengths() {
        let c = dwt_decompose(&noise(1, 2048), &WaveletSpec::default()).unwrap();
        assert_eq!(c.details[0].len(), 1024);
        assert_eq!(c.details[6].len(), 16);
        assert_eq!(c.approximation.len(), 16);
        assert!(dwt_decompose(&noise(1, 127), &WaveletSpec::default()).is_err());
    }

    #[test]
    fn constant_signal_haar() {
        let c = dwt_decompose(&[3.0; 2048], &WaveletSpec::default()).unwrap();
        assert!(c.details.iter().flatten().all(|v| v.abs() < 1e-12));
        let want = 3.0 * 2f64.powf(3.5);
        assert!(c.approximation.iter().all(|v| (v - want).abs() < 1e-10));
    }

    #[test]
    fn single_pair_haar() {
        let spec = WaveletSpec {
            family: 1,
            levels: 1,
        };
        let c = dwt_decompose(&[1.0, -1.0], &spec).unwrap();
        assert!((c.details[0][0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(c.approximation[0].abs() < 1e-15);
    }

    #[test]
    fn haar_ramp_details_constant() {
        let ramp: Vec<f64> = (0..256).map(|i| 0.5 * i as f64 - 3.0).collect();
        let c = dwt_decompose(
            &ramp,
            &WaveletSpec {
                family: 1,
                levels: 3,
            },
        )
        .unwrap();
        let d1 = &c.details[0];
        assert!(d1.iter().all(|v| (v - d1[0]).abs() < 1e-12));
    }

    #[test]
    fn zero_coeffs_reconstruct_zero() {
        let spec = WaveletSpec::default();
        let lens = DwtCoeffs::level_lengths(1000, 7);
        let c = DwtCoeffs {
            details: lens.iter().map(|l| vec![0.0; l.1]).collect(),
            approximation: vec![0.0; lens[6].0],
            spec,
            original_len: 1000,
        };
        assert!(dwt_reconstruct(&c).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inconsistent_lengths_rejected() {
        let mut c = dwt_decompose(&noise(2, 512), &WaveletSpec::default()).unwrap();
        c.details[2].pop();
        assert!(matches!(dwt_reconstruct(&c), Err(Error::Structural(_))));
        let mut c = dwt_decompose(&noise(2, 512), &WaveletSpec::default()).unwrap();
        c.approximation.push(1.0);
        assert!(dwt_reconstruct(&c).is_err());
    }

    #[test]
    fn subband_ranges() {
        use SubbandMapping::*;
        assert_eq!(
            subband_range(Subband::Detail(7), 7, 512.0, PaperTable).unwrap(),
            (4.0, 8.0)
        );
        assert_eq!(
            subband_range(Subband::Approximation, 7, 512.0, PaperTable).unwrap(),
            (0.0, 4.0)
        );
        assert_eq!(
            subband_range(Subband::Detail(6), 7, 512.0, PaperTable).unwrap(),
            (8.0, 16.0)
        );
        assert_eq!(
            subband_range(Subband::Detail(1), 7, 512.0, Standard).unwrap(),
            (128.0, 256.0)
        );
        assert_eq!(
            subband_range(Subband::Approximation, 7, 512.0, Standard).unwrap(),
            (0.0, 2.0)
        );
        assert!(subband_range(Subband::Detail(8), 7, 512.0, Standard).is_err());
        assert!(subband_range(Subband::Detail(0), 7, 512.0, Standard).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn perfect_reconstruction_and_energy(seed in 0u64..10_000, len in 128usize..3000, family in 1usize..=8, levels in 1usize..=7) {
            let x = noise(seed, len);
            let spec = WaveletSpec { family, levels };
            let c = dwt_decompose(&x, &spec).unwrap();
            let y = dwt_reconstruct(&c).unwrap();
            prop_assert_eq!(y.len(), x.len());
            let err = x.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            prop_assert!(err < 1e-9, "max err {}", err);
            let ex: f64 = x.iter().map(|v| v * v).sum();
            prop_assert!((c.energy() - ex).abs() <= 1e-9 * ex);
        }
    }
}
