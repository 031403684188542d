//! Deterministic synthetic stand-ins for clinical ECG and noise-stress recordings.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dsp::{design_butterworth_bandpass, NoiseKind, Signal};
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// One Gaussian bump of the beat template: offset from the R peak (s),
/// amplitude, width (s).
struct Wave {
    offset: f64,
    amp: f64,
    width: f64,
}

const TEMPLATE: [Wave; 5] = [
    Wave { offset: -0.20, amp: 0.15, width: 0.025 },   // P
    Wave { offset: -0.035, amp: -0.15, width: 0.010 }, // Q
    Wave { offset: 0.0, amp: 1.0, width: 0.012 },      // R
    Wave { offset: 0.035, amp: -0.25, width: 0.010 },  // S
    Wave { offset: 0.25, amp: 0.30, width: 0.050 },    // T
];

/// Sum-of-Gaussians PQRST beats with RR intervals jittered by up to 5 % and
/// per-lead amplitude scaling. P and T offsets shrink with `sqrt(RR)`.
pub fn synth_ecg(seed: u64, duration_s: f64, fs: f64, heart_rate_bpm: f64, leads: usize) -> Result<Signal> {
    if fs < 100.0 {
        return Err(Error::Parameter(format!("synthetic ECG needs fs >= 100 Hz, got {fs}")));
    }
    if !(30.0..=220.0).contains(&heart_rate_bpm) {
        return Err(Error::Parameter(format!("heart rate {heart_rate_bpm} bpm outside [30, 220]")));
    }
    if leads == 0 || !(duration_s > 0.0) {
        return Err(Error::Parameter("need at least one lead and a positive duration".into()));
    }
    let mut rng = rng_for(seed, &[crate::seed::stream::SYNTH, 0]);
    let len = (duration_s * fs).round() as usize;
    let rr_mean = 60.0 / heart_rate_bpm;

    // beat times, starting a random fraction of an interval before t = 0
    let mut beats = Vec::new();
    let mut t = -rng.random_range(0.0..rr_mean);
    while t < duration_s + 0.5 {
        let rr = rr_mean * (1.0 + rng.random_range(-0.05..=0.05));
        beats.push((t, rr));
        t += rr;
    }

    let mut data = Vec::with_capacity(len * leads);
    for _ in 0..leads {
        let gain = rng.random_range(0.6..1.4);
        let shape: Vec<f64> = TEMPLATE.iter().map(|_| 1.0 + rng.random_range(-0.2..0.2)).collect();
        let mut ch = vec![0.0; len];
        for &(tb, rr) in &beats {
            let stretch = rr.sqrt();
            for (w, k) in TEMPLATE.iter().zip(&shape) {
                let offset = if w.offset.abs() > 0.1 { w.offset * stretch } else { w.offset };
                let centre = tb + offset;
                let reach = 5.0 * w.width;
                let lo = ((centre - reach) * fs).floor().max(0.0) as usize;
                let hi = (((centre + reach) * fs).ceil().max(0.0) as usize).min(len);
                for (n, v) in ch.iter_mut().enumerate().take(hi).skip(lo) {
                    let d = (n as f64 / fs - centre) / w.width;
                    *v += gain * k * w.amp * (-0.5 * d * d).exp();
                }
            }
        }
        data.extend(ch);
    }
    Signal::new(leads, fs, data)
}

fn normalize_rms(mut v: Vec<f64>) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x /= rms);
    }
    v
}

/// Mono, zero-mean, unit-RMS noise of the given kind:
/// - BW: three sinusoids below 0.5 Hz with slowly drifting phase
/// - MA: white noise band-passed to 5-40 Hz (upper edge capped below Nyquist)
/// - EM: Poisson-timed bursts of damped 1-6 Hz oscillations
pub fn synth_noise(kind: NoiseKind, seed: u64, duration_s: f64, fs: f64) -> Result<Signal> {
    let len = (duration_s * fs).round() as usize;
    if len < 64 {
        return Err(Error::Parameter(format!("noise of {len} samples is too short")));
    }
    let tag = kind as u64 + 1;
    let mut rng = rng_for(seed, &[crate::seed::stream::SYNTH, tag]);
    let raw = match kind {
        NoiseKind::Bw => {
            let comps: Vec<(f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.05..0.5),
                        rng.random_range(0.3..1.0),
                        rng.random_range(0.0..2.0 * PI),
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            (0..len)
                .map(|n| {
                    let t = n as f64 / fs;
                    comps
                        .iter()
                        .map(|&(f, a, ph, drift)| {
                            let wobble = 0.5 * (2.0 * PI * 0.01 * t + drift).sin();
                            a * (2.0 * PI * f * t + ph + wobble).sin()
                        })
                        .sum()
                })
                .collect()
        }
        NoiseKind::Ma => {
            let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
            let hi = 40.0f64.min(0.45 * fs);
            let f = design_butterworth_bandpass(5.0, hi, fs, 2)?;
            f.filtfilt(&white)?
        }
        NoiseKind::Em => {
            let rate = 0.5; // bursts per second
            let mut v = vec![0.0; len];
            let mut t = rng.random_range(0.0..1.0 / rate);
            let mut bursts = 0;
            while t < duration_s || bursts == 0 {
                let start = if t < duration_s { t } else { rng.random_range(0.0..duration_s) };
                let f = rng.random_range(1.0..6.0);
                let tau = rng.random_range(0.1..0.4);
                let amp = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let first = (start * fs) as usize;
                let last = (((start + 5.0 * tau) * fs) as usize).min(len);
                for (n, x) in v.iter_mut().enumerate().take(last).skip(first) {
                    let dt = n as f64 / fs - start;
                    *x += amp * (-dt / tau).exp() * (2.0 * PI * f * dt).sin();
                }
                bursts += 1;
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                t += -u.ln() / rate;
            }
            v
        }
    };
    Signal::new(1, fs, normalize_rms(raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecg_is_deterministic_and_bounded() {
        let a = synth_ecg(4, 10.0, 500.0, 72.0, 12).unwrap();
        let b = synth_ecg(4, 10.0, 500.0, 72.0, 12).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.channels(), a.len()), (12, 5000));
        for ch in a.iter_channels() {
            let peak = ch.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((0.5..=2.0).contains(&peak), "peak {peak}");
        }
        assert_ne!(a, synth_ecg(5, 10.0, 500.0, 72.0, 12).unwrap());
    }

    #[test]
    fn ecg_rejects_bad_rates() {
        assert!(synth_ecg(0, 1.0, 50.0, 60.0, 1).is_err());
        assert!(synth_ecg(0, 1.0, 500.0, 20.0, 1).is_err());
        assert!(synth_ecg(0, 1.0, 500.0, 250.0, 1).is_err());
    }

    #[test]
    fn sixty_bpm_autocorrelation_peaks_near_one_second() {
        let s = synth_ecg(11, 20.0, 500.0, 60.0, 1).unwrap();
        let x = s.channel(0);
        let ac = |lag: usize| -> f64 { x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum() };
        let best = (400..=600).max_by(|&a, &b| ac(a).partial_cmp(&ac(b)).unwrap()).unwrap();
        assert!((475..=525).contains(&best), "lag {best}");
        assert!(ac(best) >= ac(best - 1) && ac(best) >= ac(best + 1));
    }

    #[test]
    fn noise_is_unit_rms_and_deterministic() {
        for kind in NoiseKind::ALL {
            let a = synth_noise(kind, 3, 30.0, 360.0).unwrap();
            let rms = (a.power()).sqrt();
            assert!((rms - 1.0).abs() < 1e-9, "{kind:?}: {rms}");
            assert_eq!(a, synth_noise(kind, 3, 30.0, 360.0).unwrap());
        }
    }
}
