use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::Signal;
use crate::error::{Error, Result};

/// Keeps samples `0, factor, 2 * factor, ...` with no anti-alias filtering.
pub fn decimate_skip(x: &Signal, factor: usize) -> Result<Signal> {
    if factor < 1 {
        return Err(Error::Parameter("decimation factor must be at least 1".into()));
    }
    x.map_channels(x.sample_rate() / factor as f64, |c| c.iter().step_by(factor).copied().collect())
}

/// Linear interpolation between anchors at `i * ratio`; the `ratio - 1`
/// samples after the final anchor hold its value so the output is exactly
/// `ratio * len` long.
pub fn linear_interp_upsample(x: &Signal, ratio: usize) -> Result<Signal> {
    if x.len() < 2 {
        return Err(Error::Parameter(format!("linear interpolation needs at least 2 samples, got {}", x.len())));
    }
    if ratio < 1 {
        return Err(Error::Parameter("upsampling ratio must be at least 1".into()));
    }
    x.map_channels(x.sample_rate() * ratio as f64, |c| upsample_channel(c, ratio))
}

pub fn upsample_channel(c: &[f64], ratio: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(c.len() * ratio);
    for pair in c.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        out.push(a);
        for j in 1..ratio {
            let t = j as f64 / ratio as f64;
            out.push(a + (b - a) * t);
        }
    }
    let last = c[c.len() - 1];
    out.extend(std::iter::repeat_n(last, ratio));
    out
}

/// Resamples every channel to `target_fs` by linear interpolation at
/// `t = n / target_fs`; used to bring noise recordings to the LR rate.
pub fn resample_linear(x: &Signal, target_fs: f64) -> Result<Signal> {
    if !(target_fs > 0.0) {
        return Err(Error::Parameter(format!("target rate must be positive, got {target_fs}")));
    }
    let src_fs = x.sample_rate();
    let duration = x.len() as f64 / src_fs;
    let out_len = ((duration * target_fs).floor() as usize).max(1);
    x.map_channels(target_fs, |c| {
        (0..out_len)
            .map(|n| {
                let pos = n as f64 * src_fs / target_fs;
                let i = (pos.floor() as usize).min(c.len() - 1);
                let frac = pos - i as f64;
                if i + 1 < c.len() {
                    c[i] + (c[i + 1] - c[i]) * frac
                } else {
                    c[i]
                }
            })
            .collect()
    })
}

/// Gain applied to `noise` so that `clean + gain * noise` has the requested SNR,
/// with powers taken over all channels and samples.
pub fn noise_gain(clean: &Signal, noise: &Signal, snr_db: f64) -> Result<f64> {
    let pc = clean.power();
    let pn = noise.power();
    if !(pc > 0.0) {
        return Err(Error::Parameter("clean signal has zero power".into()));
    }
    if !(pn > 0.0) {
        return Err(Error::Parameter("noise has zero power".into()));
    }
    Ok((pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt())
}

pub fn mix_noise_at_snr(clean: &Signal, noise: &Signal, snr_db: f64) -> Result<Signal> {
    if clean.channels() != noise.channels() || clean.len() != noise.len() {
        return Err(Error::Dimension(format!(
            "clean is {}x{}, noise is {}x{}",
            clean.channels(),
            clean.len(),
            noise.channels(),
            noise.len()
        )));
    }
    let gain = noise_gain(clean, noise, snr_db)?;
    let data = clean.data().iter().zip(noise.data()).map(|(c, n)| c + gain * n).collect();
    clean.with_data(data)
}

/// The three noise-stress kinds: baseline wander, muscle artifact, electrode motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoiseKind {
    #[serde(rename = "BW")]
    Bw,
    #[serde(rename = "MA")]
    Ma,
    #[serde(rename = "EM")]
    Em,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Bw, NoiseKind::Ma, NoiseKind::Em];

    pub fn code(self) -> &'static str {
        match self {
            NoiseKind::Bw => "BW",
            NoiseKind::Ma => "MA",
            NoiseKind::Em => "EM",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BW" => Ok(NoiseKind::Bw),
            "MA" => Ok(NoiseKind::Ma),
            "EM" => Ok(NoiseKind::Em),
            other => Err(Error::Parameter(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Mono noise recordings per kind, already at the rate of the signals they corrupt.
#[derive(Clone, Debug, Default)]
pub struct NoiseBank {
    recordings: Vec<(NoiseKind, Vec<Signal>)>,
}

impl NoiseBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, kind: NoiseKind, recording: Signal) {
        match self.recordings.iter_mut().find(|(k, _)| *k == kind) {
            Some((_, list)) => list.push(recording),
            None => {
                self.recordings.push((kind, vec![recording]));
                self.recordings.sort_by_key(|(k, _)| *k);
            }
        }
    }

    pub fn kinds(&self) -> Vec<NoiseKind> {
        self.recordings.iter().filter(|(_, v)| !v.is_empty()).map(|(k, _)| *k).collect()
    }

    pub fn recordings(&self, kind: NoiseKind) -> &[Signal] {
        self.recordings.iter().find(|(k, _)| *k == kind).map_or(&[], |(_, v)| v.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.kinds().is_empty()
    }
}

/// Noise contamination protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProtocol {
    /// Probability that a segment is contaminated.
    pub p_noise: f64,
    /// Inclusive SNR range in dB, drawn uniformly.
    pub snr_range: [f64; 2],
}

impl Default for NoiseProtocol {
    fn default() -> Self {
        NoiseProtocol { p_noise: 0.5, snr_range: [-5.0, 15.0] }
    }
}

/// What happened to one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CorruptionRecord {
    Clean,
    Noisy { kind: NoiseKind, recording: usize, offset: usize, snr_db: f64 },
}

impl CorruptionRecord {
    pub fn is_noisy(&self) -> bool {
        matches!(self, CorruptionRecord::Noisy { .. })
    }
}

/// With probability `p_noise`, pick a kind uniformly among those in the bank,
/// a recording and an aligned window at random, draw the SNR, and add the
/// window (same samples on every lead) at that SNR.
pub fn corrupt_segment<R: Rng + ?Sized>(
    clean: &Signal,
    bank: &NoiseBank,
    rng: &mut R,
    protocol: &NoiseProtocol,
) -> Result<(Signal, CorruptionRecord)> {
    let [lo, hi] = protocol.snr_range;
    if !(0.0..=1.0).contains(&protocol.p_noise) || !(lo <= hi) {
        return Err(Error::Config(format!("invalid noise protocol {protocol:?}")));
    }
    if !rng.random_bool(protocol.p_noise) {
        return Ok((clean.clone(), CorruptionRecord::Clean));
    }
    let kinds = bank.kinds();
    if kinds.is_empty() {
        return Err(Error::Config("noise was drawn but the noise bank is empty".into()));
    }
    let kind = kinds[rng.random_range(0..kinds.len())];
    let recs = bank.recordings(kind);
    let recording = rng.random_range(0..recs.len());
    let noise = &recs[recording];
    if noise.len() < clean.len() {
        return Err(Error::Config(format!(
            "{} recording {recording} has {} samples, segment needs {}",
            kind.code(),
            noise.len(),
            clean.len()
        )));
    }
    let offset = rng.random_range(0..=noise.len() - clean.len());
    let snr_db = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let window = &noise.channel(0)[offset..offset + clean.len()];
    let tiled: Vec<f64> = (0..clean.channels()).flat_map(|_| window.iter().copied()).collect();
    let noise_sig = clean.with_data(tiled)?;
    let noisy = mix_noise_at_snr(clean, &noise_sig, snr_db)?;
    Ok((noisy, CorruptionRecord::Noisy { kind, recording, offset, snr_db }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand::Rng;

    fn sig(ch: usize, fs: f64, data: Vec<f64>) -> Signal {
        Signal::new(ch, fs, data).unwrap()
    }

    #[test]
    fn decimate_examples() {
        let x = sig(1, 500.0, (0..20).map(f64::from).collect());
        let d = decimate_skip(&x, 10).unwrap();
        assert_eq!(d.data(), &[0.0, 10.0]);
        assert_eq!(d.sample_rate(), 50.0);
        assert_eq!(decimate_skip(&x, 1).unwrap(), x);
        assert!(decimate_skip(&x, 0).is_err());
        let long = sig(12, 500.0, vec![0.5; 12 * 5000]);
        let d = decimate_skip(&long, 10).unwrap();
        assert_eq!((d.len(), d.sample_rate(), d.channels()), (500, 50.0, 12));
    }

    #[test]
    fn upsample_ramp_and_hold() {
        let x = sig(1, 50.0, vec![0.0, 10.0]);
        let u = linear_interp_upsample(&x, 10).unwrap();
        let mut expect: Vec<f64> = (0..=10).map(f64::from).collect();
        expect.extend([10.0; 9]);
        assert_eq!(u.data(), expect.as_slice());
        assert_eq!(u.sample_rate(), 500.0);
        let c = sig(2, 50.0, vec![3.25; 14]);
        assert!(linear_interp_upsample(&c, 10).unwrap().data().iter().all(|&v| v == 3.25));
        assert!(linear_interp_upsample(&sig(1, 50.0, vec![1.0]), 10).is_err());
    }

    #[test]
    fn mix_closed_forms() {
        let clean = sig(1, 50.0, vec![1.0, -1.0, 1.0, -1.0]);
        let noise = sig(1, 50.0, vec![1.0, 1.0, -1.0, -1.0]);
        assert!((noise_gain(&clean, &noise, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((noise_gain(&clean, &noise, 10.0).unwrap() - 0.1f64.sqrt()).abs() < 1e-15);
        let zero = sig(1, 50.0, vec![0.0; 4]);
        assert!(mix_noise_at_snr(&clean, &zero, 0.0).is_err());
        assert!(mix_noise_at_snr(&zero, &noise, 0.0).is_err());
    }

    fn bank(kinds: &[NoiseKind], len: usize) -> NoiseBank {
        let mut b = NoiseBank::new();
        for (i, &k) in kinds.iter().enumerate() {
            let data = (0..len).map(|n| ((n * (i + 3)) as f64 * 0.37).sin()).collect();
            b.push(k, sig(1, 50.0, data));
        }
        b
    }

    fn clean12() -> Signal {
        sig(12, 50.0, (0..12 * 100).map(|n| (n as f64 * 0.11).cos() + 0.2).collect())
    }

    #[test]
    fn p_zero_is_identity() {
        let mut rng = rng_for(1, &[]);
        let proto = NoiseProtocol { p_noise: 0.0, snr_range: [-5.0, 15.0] };
        let (out, rec) = corrupt_segment(&clean12(), &bank(&NoiseKind::ALL, 400), &mut rng, &proto).unwrap();
        assert_eq!(out, clean12());
        assert_eq!(rec, CorruptionRecord::Clean);
    }

    #[test]
    fn degenerate_range_hits_exact_snr() {
        let mut rng = rng_for(2, &[]);
        let proto = NoiseProtocol { p_noise: 1.0, snr_range: [0.0, 0.0] };
        let clean = clean12();
        let (out, rec) = corrupt_segment(&clean, &bank(&[NoiseKind::Ma], 400), &mut rng, &proto).unwrap();
        let CorruptionRecord::Noisy { kind, snr_db, .. } = rec else { panic!("expected noise") };
        assert_eq!(kind, NoiseKind::Ma);
        assert_eq!(snr_db, 0.0);
        let resid: Vec<f64> = out.data().iter().zip(clean.data()).map(|(a, b)| a - b).collect();
        let pn = resid.iter().map(|v| v * v).sum::<f64>() / resid.len() as f64;
        assert!((10.0 * (clean.power() / pn).log10()).abs() < 1e-9);
    }

    #[test]
    fn empty_bank_is_a_configuration_error() {
        let mut rng = rng_for(3, &[]);
        let proto = NoiseProtocol { p_noise: 1.0, snr_range: [0.0, 5.0] };
        let err = corrupt_segment(&clean12(), &NoiseBank::new(), &mut rng, &proto).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn corruption_stream_is_deterministic() {
        let b = bank(&NoiseKind::ALL, 400);
        let proto = NoiseProtocol::default();
        let run = || {
            (0..50)
                .map(|i| corrupt_segment(&clean12(), &b, &mut rng_for(9, &[i]), &proto).unwrap().1)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resample_360_to_50() {
        let x = sig(1, 360.0, (0..3600).map(|n| n as f64 / 360.0).collect());
        let y = resample_linear(&x, 50.0).unwrap();
        assert_eq!(y.len(), 500);
        for (n, v) in y.data().iter().enumerate() {
            assert!((v - n as f64 / 50.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn anchors_survive_round_trip(data in proptest::collection::vec(-5.0f64..5.0, 2..60), r in 1usize..13) {
            let x = sig(1, 50.0, data);
            let back = decimate_skip(&linear_interp_upsample(&x, r).unwrap(), r).unwrap();
            prop_assert_eq!(back.data(), x.data());
        }

        #[test]
        fn added_noise_is_proportional(seed in 0u64..500, snr in -10.0f64..20.0) {
            let mut rng = rng_for(seed, &[]);
            let clean = sig(2, 50.0, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect());
            let noise = sig(2, 50.0, (0..64).map(|_| rng.random_range(-1.0..1.0)).collect());
            let out = mix_noise_at_snr(&clean, &noise, snr).unwrap();
            let g = noise_gain(&clean, &noise, snr).unwrap();
            for ((o, c), n) in out.data().iter().zip(clean.data()).zip(noise.data()) {
                prop_assert!(((o - c) - g * n).abs() < 1e-12);
            }
        }
    }
}
