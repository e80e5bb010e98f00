//! IIR filter design and zero-phase application in second-order sections.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Normalised biquad `b0 + b1 z^-1 + b2 z^-2 / 1 + a1 z^-1 + a2 z^-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state for a unit step in steady state.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * g;
        let z1 = self.b[1] - self.a[0] * g + z2;
        [z1, z2]
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }
}

/// A cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    sections: Vec<Biquad>,
}

impl SosFilter {
    pub fn new(sections: Vec<Biquad>) -> Self {
        SosFilter { sections }
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Complex response at `freq` Hz.
    pub fn frequency_response(&self, freq: f64, sample_rate: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * freq / sample_rate;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Single causal pass, states initialised to the steady state of a
    /// constant input equal to `x[0]`.
    pub fn filter_steady(&self, x: &[f64]) -> Vec<f64> {
        let x0 = x.first().copied().unwrap_or(0.0);
        let mut out = x.to_vec();
        let mut scale = x0;
        for sec in &self.sections {
            let zi = sec.step_state();
            let mut z1 = zi[0] * scale;
            let mut z2 = zi[1] * scale;
            for v in out.iter_mut() {
                let xi = *v;
                let yi = sec.b[0] * xi + z1;
                z1 = sec.b[1] * xi - sec.a[0] * yi + z2;
                z2 = sec.b[2] * xi - sec.a[1] * yi;
                *v = yi;
            }
            scale *= sec.dc_gain();
        }
        out
    }

    /// Number of samples of odd-reflection padding used by [`filtfilt`].
    ///
    /// [`filtfilt`]: SosFilter::filtfilt
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Forward-backward filtering with odd-reflection edge padding.
    ///
    /// The effective magnitude response is `|H|^2` and the phase is zero.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            // a single sample has no defined edge extension; apply |H(0)|^2
            let g: f64 = self.sections.iter().map(Biquad::dc_gain).product();
            return x.iter().map(|v| v * g * g).collect();
        }
        let pad = self.pad_len().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let first = x[0];
        let last = x[n - 1];
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        let mut y = self.filter_steady(&ext);
        y.reverse();
        let mut y = self.filter_steady(&y);
        y.reverse();
        y.drain(..pad);
        y.truncate(n);
        y
    }
}

fn check_cutoff(f: f64, sample_rate: f64, what: &str) -> Result<()> {
    let nyquist = sample_rate / 2.0;
    if !(f > 0.0 && f < nyquist) {
        return Err(Error::param(format!(
            "{what} of {f} Hz must lie in (0, {nyquist}) Hz"
        )));
    }
    Ok(())
}

/// Digital Butterworth bandpass of the given prototype `order` via the
/// bilinear transform with pre-warped band edges. The result has `order`
/// sections and unit gain at the geometric centre of the warped band.
pub fn butterworth_bandpass(
    order: usize,
    f_lo: f64,
    f_hi: f64,
    sample_rate: f64,
) -> Result<SosFilter> {
    if order == 0 {
        return Err(Error::param("filter order must be >= 1"));
    }
    check_cutoff(f_lo, sample_rate, "low cutoff")?;
    check_cutoff(f_hi, sample_rate, "high cutoff")?;
    if f_lo >= f_hi {
        return Err(Error::param(format!(
            "low cutoff {f_lo} Hz must be below high cutoff {f_hi} Hz"
        )));
    }
    let fs2 = 2.0 * sample_rate;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / sample_rate).tan();
    let (wl, wh) = (warp(f_lo), warp(f_hi));
    let w0 = (wl * wh).sqrt();
    let bw = wh - wl;

    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let disc = (p * p - w0 * w0).sqrt();
        for s in [p + disc, p - disc] {
            poles.push((fs2 + s) / (fs2 - s));
        }
    }

    let mut sections: Vec<Biquad> = pair_poles(poles)
        .into_iter()
        .map(|(p1, p2)| {
            let sum = p1 + p2;
            let prod = p1 * p2;
            Biquad {
                b: [1.0, 0.0, -1.0],
                a: [-sum.re, prod.re],
            }
        })
        .collect();

    let centre = 2.0 * (w0 / fs2).atan() * sample_rate / (2.0 * std::f64::consts::PI);
    let gain = SosFilter::new(sections.clone())
        .frequency_response(centre, sample_rate)
        .norm();
    for b in sections[0].b.iter_mut() {
        *b /= gain;
    }
    Ok(SosFilter::new(sections))
}

/// Groups conjugate pairs together and real poles two at a time.
fn pair_poles(poles: Vec<Complex64>) -> Vec<(Complex64, Complex64)> {
    const REAL_TOL: f64 = 1e-10;
    let (real, complex): (Vec<_>, Vec<_>) = poles.into_iter().partition(|p| p.im.abs() < REAL_TOL);
    let mut pairs: Vec<_> = complex
        .into_iter()
        .filter(|p| p.im > 0.0)
        .map(|p| (p, p.conj()))
        .collect();
    let mut real: Vec<_> = real
        .into_iter()
        .map(|p| Complex64::new(p.re, 0.0))
        .collect();
    real.sort_by(|a, b| a.re.total_cmp(&b.re));
    for chunk in real.chunks(2) {
        pairs.push((
            chunk[0],
            chunk.get(1).copied().unwrap_or(Complex64::new(0.0, 0.0)),
        ));
    }
    pairs
}

/// Second-order IIR notch at `f0` Hz with quality factor `q`.
pub fn iir_notch(f0: f64, q: f64, sample_rate: f64) -> Result<SosFilter> {
    check_cutoff(f0, sample_rate, "notch frequency")?;
    if !(q > 0.0) {
        return Err(Error::param(format!(
            "notch quality factor must be > 0, got {q}"
        )));
    }
    let w0 = 2.0 * std::f64::consts::PI * f0 / sample_rate;
    let bw = w0 / q;
    let g = 1.0 / (1.0 + (bw / 2.0).tan());
    let c = w0.cos();
    Ok(SosFilter::new(vec![Biquad {
        b: [g, -2.0 * g * c, g],
        a: [-2.0 * g * c, 2.0 * g - 1.0],
    }]))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// |H|^2 of an order-n digital Butterworth bandpass, from the prototype.
    fn analytic_power(f: f64, order: i32, lo: f64, hi: f64, fs: f64) -> f64 {
        let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
        let (wl, wh, w) = (warp(lo), warp(hi), warp(f));
        let x = (w * w - wl * wh) / (w * (wh - wl));
        1.0 / (1.0 + x.powi(2 * order))
    }

    #[test]
    fn bandpass_matches_prototype_response() {
        let filt = butterworth_bandpass(3, 1.0, 55.0, 512.0).unwrap();
        assert_eq!(filt.sections().len(), 3);
        for &f in &[0.5, 1.0, 2.0, 10.0, 40.0, 55.0, 80.0, 150.0, 250.0] {
            let got = filt.frequency_response(f, 512.0).norm_sqr();
            let want = analytic_power(f, 3, 1.0, 55.0, 512.0);
            assert!(
                (got - want).abs() < 1e-9 * want.max(1e-3),
                "f={f} got={got} want={want}"
            );
        }
    }

    #[test]
    fn narrow_band_pairs_complex_poles() {
        let filt = butterworth_bandpass(4, 8.0, 12.0, 512.0).unwrap();
        assert_eq!(filt.sections().len(), 4);
        for &f in &[6.0, 9.8, 14.0] {
            let got = filt.frequency_response(f, 512.0).norm_sqr();
            let want = analytic_power(f, 4, 8.0, 12.0, 512.0);
            assert!((got - want).abs() < 1e-8, "f={f}");
        }
    }

    #[test]
    fn design_rejects_bad_cutoffs() {
        assert!(butterworth_bandpass(3, 1.0, 256.0, 512.0).is_err());
        assert!(butterworth_bandpass(3, 30.0, 10.0, 512.0).is_err());
        assert!(butterworth_bandpass(0, 1.0, 10.0, 512.0).is_err());
        assert!(iir_notch(300.0, 35.0, 512.0).is_err());
        assert!(iir_notch(50.0, 0.0, 512.0).is_err());
    }

    #[test]
    fn notch_zero_at_centre() {
        let n = iir_notch(50.0, 35.0, 512.0).unwrap();
        assert!(n.frequency_response(50.0, 512.0).norm() < 1e-12);
        assert!((n.frequency_response(10.0, 512.0).norm() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn steady_state_init_passes_constant() {
        // Lowpass-like biquad with non-zero DC gain.
        let f = SosFilter::new(vec![Biquad {
            b: [0.2, 0.4, 0.2],
            a: [-0.5, 0.3],
        }]);
        let y = f.filter_steady(&[3.0; 50]);
        let g = 0.8 / 0.8;
        for v in y {
            assert!((v - 3.0 * g).abs() < 1e-12);
        }
    }

    #[test]
    fn filtfilt_keeps_length_and_short_inputs() {
        let f = butterworth_bandpass(3, 1.0, 55.0, 512.0).unwrap();
        for n in [0usize, 1, 2, 5, 30, 1000] {
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
            assert_eq!(f.filtfilt(&x).len(), n);
        }
    }
}
