//! Butterworth band-pass design as a cascade of second-order sections, and
//! single-pass or forward-backward (zero-phase) application.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::Signal;
use crate::error::{Error, Result};

/// One second-order section in transposed direct form II:
/// `H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + zi * (self.b[1] + zi * self.b[2]);
        let den = 1.0 + zi * (self.a[0] + zi * self.a[1]);
        num / den
    }

    pub fn poles(&self) -> [Complex64; 2] {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    /// State `[s1, s2]` that keeps the output constant for a unit step input.
    fn step_state(&self) -> ([f64; 2], f64) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let y = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let s2 = b2 - a2 * y;
        let s1 = b1 - a1 * y + s2;
        ([s1, s2], y)
    }
}

/// Ordered cascade of stable biquads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
}

impl BiquadCascade {
    /// Total filter order.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    pub fn response(&self, freq: f64, fs: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * freq / fs);
        self.sections.iter().map(|s| s.response(z)).product()
    }

    /// Single-pass magnitude in dB.
    pub fn gain_db(&self, freq: f64, fs: f64) -> f64 {
        20.0 * self.response(freq, fs).norm().log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().flat_map(|s| s.poles()).all(|p| p.norm() < 1.0 - 1e-9)
    }

    /// Causal filtering starting from the given per-section states.
    fn run(&self, x: &[f64], init: Option<(&[[f64; 2]], f64)>) -> Vec<f64> {
        let mut out = x.to_vec();
        for (k, sec) in self.sections.iter().enumerate() {
            let [b0, b1, b2] = sec.b;
            let [a1, a2] = sec.a;
            let [mut s1, mut s2] = match init {
                Some((zi, scale)) => [zi[k][0] * scale, zi[k][1] * scale],
                None => [0.0, 0.0],
            };
            for v in out.iter_mut() {
                let xin = *v;
                let y = b0 * xin + s1;
                s1 = b1 * xin - a1 * y + s2;
                s2 = b2 * xin - a2 * y;
                *v = y;
            }
        }
        out
    }

    /// Per-section states for a unit step already in steady state.
    fn steady_states(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let (mut st, gain) = s.step_state();
                st[0] *= level;
                st[1] *= level;
                level *= gain;
                st
            })
            .collect()
    }

    /// Samples of odd reflection added at each end by [`Self::filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * self.order()
    }

    /// Forward-backward filtering of one channel with odd reflection padding
    /// and steady-state initial conditions. Zero phase, squared magnitude.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        if x.len() <= 2 * pad {
            return Err(Error::Parameter(format!(
                "zero-phase filtering of order {} needs more than {} samples, got {}",
                self.order(),
                2 * pad,
                x.len()
            )));
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.steady_states();
        let mut y = self.run(&ext, Some((&zi, ext[0])));
        y.reverse();
        let mut y = self.run(&y, Some((&zi, y[0])));
        y.reverse();
        Ok(y[pad..pad + n].to_vec())
    }

    pub fn lfilter(&self, x: &[f64]) -> Vec<f64> {
        self.run(x, None)
    }
}

/// Analog Butterworth low-pass prototype of order `order`, transformed to a
/// band-pass around the pre-warped cutoffs and mapped with the bilinear
/// transform. The resulting band-pass has `order` biquads and is exactly
/// -3 dB at both cutoffs.
pub fn design_butterworth_bandpass(f_lo: f64, f_hi: f64, fs: f64, order: usize) -> Result<BiquadCascade> {
    if order == 0 {
        return Err(Error::Parameter("filter order must be at least 1".into()));
    }
    if !(fs > 0.0 && 0.0 < f_lo && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(Error::Parameter(format!(
            "band-pass needs 0 < f_lo < f_hi < fs/2, got {f_lo}, {f_hi} at fs = {fs}"
        )));
    }
    let fs2 = 2.0 * fs;
    let w_lo = fs2 * (PI * f_lo / fs).tan();
    let w_hi = fs2 * (PI * f_hi / fs).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    // analog band-pass pole pairs, each pair either conjugate or both real
    let mut pairs: Vec<(Complex64, Complex64)> = Vec::with_capacity(order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex64::from_polar(1.0, theta);
        if p.im < -1e-12 {
            continue;
        }
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        let plus = (pb + disc) / 2.0;
        let minus = (pb - disc) / 2.0;
        if p.im.abs() <= 1e-12 {
            pairs.push((plus, minus));
        } else {
            pairs.push((plus, plus.conj()));
            pairs.push((minus, minus.conj()));
        }
    }

    // `order` analog zeros at s = 0 map to z = 1; the zeros at infinity map to z = -1
    let fs2c = Complex64::new(fs2, 0.0);
    let mut gain = (bw * fs2).powi(order as i32);
    let mut sections = Vec::with_capacity(order);
    for (p1, p2) in pairs {
        gain /= ((fs2c - p1) * (fs2c - p2)).re;
        let z1 = (fs2 + p1) / (fs2 - p1);
        let z2 = (fs2 + p2) / (fs2 - p2);
        sections.push(Biquad { b: [1.0, 0.0, -1.0], a: [-(z1 + z2).re, (z1 * z2).re] });
    }
    if let Some(first) = sections.first_mut() {
        for b in first.b.iter_mut() {
            *b *= gain;
        }
    }
    let cascade = BiquadCascade { sections };
    if !cascade.is_stable() {
        return Err(Error::Parameter("designed filter is unstable".into()));
    }
    Ok(cascade)
}

/// Whether ground truth is filtered forward-backward or in a single causal pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    #[default]
    ZeroPhase,
    Causal,
}

/// Zero-phase filtering of every channel.
pub fn apply_zero_phase(x: &Signal, f: &BiquadCascade) -> Result<Signal> {
    apply(x, f, FilterMode::ZeroPhase)
}

pub fn apply(x: &Signal, f: &BiquadCascade, mode: FilterMode) -> Result<Signal> {
    let mut out = Vec::with_capacity(x.data().len());
    for ch in x.iter_channels() {
        match mode {
            FilterMode::ZeroPhase => out.extend(f.filtfilt(ch)?),
            FilterMode::Causal => out.extend(f.lfilter(ch)),
        }
    }
    x.with_data(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ecg_filter() -> BiquadCascade {
        design_butterworth_bandpass(1.0, 45.0, 500.0, 2).unwrap()
    }

    #[test]
    fn minus_three_db_at_cutoffs() {
        let f = ecg_filter();
        assert_eq!(f.sections.len(), 2);
        for fc in [1.0, 45.0] {
            let g = f.gain_db(fc, 500.0);
            assert!((g + 3.0103).abs() < 0.1, "{fc} Hz: {g} dB");
        }
    }

    #[test]
    fn unity_at_centre_and_blocks_dc() {
        let f = ecg_filter();
        let centre = (1.0f64 * 45.0).sqrt();
        assert!(f.gain_db(centre, 500.0).abs() < 0.1);
        assert!(f.response(0.0, 500.0).norm() < 1e-12);
        assert!(f.response(250.0, 500.0).norm() < 1e-12);
    }

    #[test]
    fn designs_are_stable_across_orders() {
        for order in 1..=5 {
            for (lo, hi, fs) in [(1.0, 45.0, 500.0), (5.0, 40.0, 360.0), (0.5, 20.0, 100.0)] {
                let f = design_butterworth_bandpass(lo, hi, fs, order).unwrap();
                assert_eq!(f.order(), 2 * order);
                assert!(f.is_stable());
                assert!((f.gain_db(lo, fs) + 3.0103).abs() < 0.01, "{order} {lo} {hi} {fs}: {}", f.gain_db(lo, fs));
                assert!((f.gain_db(hi, fs) + 3.0103).abs() < 0.01);
            }
        }
    }

    #[test]
    fn rejects_bad_cutoffs() {
        assert!(design_butterworth_bandpass(1.0, 250.0, 500.0, 2).is_err());
        assert!(design_butterworth_bandpass(45.0, 1.0, 500.0, 2).is_err());
        assert!(design_butterworth_bandpass(0.0, 10.0, 500.0, 2).is_err());
    }

    #[test]
    fn zero_signal_stays_zero() {
        let f = ecg_filter();
        assert!(f.filtfilt(&[0.0; 100]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_is_removed() {
        let f = ecg_filter();
        let y = f.filtfilt(&vec![1.0; 2000]).unwrap();
        let inner = &y[100..1900];
        assert!(inner.iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn short_signal_is_rejected() {
        let f = ecg_filter();
        assert!(matches!(f.filtfilt(&[1.0; 24]), Err(Error::Parameter(_))));
    }

    /// Least-squares fit of `a sin + b cos` at the known frequency.
    fn sine_fit(y: &[f64], freq: f64, fs: f64) -> (f64, f64) {
        let (mut ss, mut cc, mut sc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (n, v) in y.iter().enumerate() {
            let w = 2.0 * PI * freq * n as f64 / fs;
            let (s, c) = w.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += v * s;
            yc += v * c;
        }
        let det = ss * cc - sc * sc;
        ((ys * cc - yc * sc) / det, (yc * ss - ys * sc) / det)
    }

    #[test]
    fn band_interior_sine_keeps_amplitude_and_phase() {
        let f = ecg_filter();
        let fs = 500.0;
        let x: Vec<f64> = (0..5000).map(|n| (2.0 * PI * 10.0 * n as f64 / fs).sin()).collect();
        let y = f.filtfilt(&x).unwrap();
        let (a, b) = sine_fit(&y[500..4500], 10.0, fs);
        let (a0, b0) = sine_fit(&x[500..4500], 10.0, fs);
        let amp = a.hypot(b);
        assert!((0.95..=1.0).contains(&amp), "amplitude {amp}");
        let phase = b.atan2(a) - b0.atan2(a0);
        assert!(phase.abs() < 1e-3, "phase {phase}");
    }

    #[test]
    fn cross_correlation_peak_at_zero_lag() {
        let f = ecg_filter();
        let fs = 500.0;
        let x: Vec<f64> = (0..4000).map(|n| (2.0 * PI * 7.3 * n as f64 / fs).sin()).collect();
        let y = f.filtfilt(&x).unwrap();
        let xc = |lag: isize| -> f64 { (500..3500).map(|n| x[n] * y[(n as isize + lag) as usize]).sum() };
        let best = (-20..=20).max_by(|&a, &b| xc(a).partial_cmp(&xc(b)).unwrap()).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn zero_phase_response_is_squared_magnitude() {
        let f = ecg_filter();
        let fs = 500.0;
        let freq = 30.0;
        let x: Vec<f64> = (0..6000).map(|n| (2.0 * PI * freq * n as f64 / fs).sin()).collect();
        let y = f.filtfilt(&x).unwrap();
        let (a, b) = sine_fit(&y[1000..5000], freq, fs);
        let expect = f.response(freq, fs).norm_sqr();
        assert!((a.hypot(b) - expect).abs() < 1e-3);
    }

    #[test]
    fn causal_mode_delays_phase() {
        let f = ecg_filter();
        let sig =
            Signal::new(1, 500.0, (0..3000).map(|n| (2.0 * PI * 10.0 * n as f64 / 500.0).sin()).collect()).unwrap();
        let causal = apply(&sig, &f, FilterMode::Causal).unwrap();
        let zp = apply(&sig, &f, FilterMode::ZeroPhase).unwrap();
        assert_eq!(causal.len(), sig.len());
        assert_ne!(causal, zp);
    }
}
