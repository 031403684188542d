//! Dataset ingestion, fold splitting, pair preparation and synthetic generators.

mod io;
mod synth;

pub use io::{
    load_dataset, load_noise_bank, load_pair_dataset, read_raster, read_raster_any, save_noise_bank, save_pair_dataset,
    write_dataset, write_raster, NoiseEntry, PairDataset, PairEntry, Record, RecordManifest, NOISE_FILE, PAIRS_FILE,
};
pub use synth::{synth_ecg, synth_noise};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{
    apply, corrupt_segment, decimate_skip, design_butterworth_bandpass, resample_linear, CorruptionRecord, FilterMode,
    NoiseBank, NoiseKind, NoiseProtocol, Signal,
};
use crate::error::{Error, Result};
use crate::seed::{rng_for, stream};

/// Anything carrying a fold number.
pub trait Folded {
    fn fold(&self) -> u8;
}

impl Folded for Record {
    fn fold(&self) -> u8 {
        self.meta.fold
    }
}

impl Folded for SegmentPair {
    fn fold(&self) -> u8 {
        self.fold
    }
}

#[derive(Clone, Debug)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
    /// One message per empty split.
    pub warnings: Vec<String>,
}

/// Folds 1-8 train, 9 validation, 10 test. Empty splits only warn.
pub fn split_folds<T: Folded>(items: Vec<T>) -> Splits<T> {
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for it in items {
        match it.fold() {
            9 => val.push(it),
            10 => test.push(it),
            _ => train.push(it),
        }
    }
    let warnings = [("train", train.len()), ("validation", val.len()), ("test", test.len())]
        .iter()
        .filter(|(_, n)| *n == 0)
        .map(|(name, _)| format!("{name} split is empty"))
        .collect();
    Splits { train, val, test, warnings }
}

/// Low-rate input plus its high-rate ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPair {
    pub id: String,
    pub fold: u8,
    pub lr: Signal,
    pub hr_gt: Signal,
    pub corruption: CorruptionRecord,
}

impl SegmentPair {
    pub fn new(id: String, fold: u8, lr: Signal, hr_gt: Signal, corruption: CorruptionRecord) -> Result<Self> {
        if lr.channels() != hr_gt.channels() {
            return Err(Error::Dimension(format!(
                "pair `{id}`: {} LR leads vs {} GT leads",
                lr.channels(),
                hr_gt.channels()
            )));
        }
        if !hr_gt.len().is_multiple_of(lr.len()) {
            return Err(Error::Dimension(format!(
                "pair `{id}`: GT length {} is not a multiple of LR length {}",
                hr_gt.len(),
                lr.len()
            )));
        }
        Ok(SegmentPair { id, fold, lr, hr_gt, corruption })
    }

    pub fn ratio(&self) -> usize {
        self.hr_gt.len() / self.lr.len()
    }
}

/// Ground-truth preparation and degradation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DspConfig {
    pub f_lo: f64,
    pub f_hi: f64,
    pub order: usize,
    pub filter_mode: FilterMode,
    pub factor: usize,
    pub protocol: NoiseProtocol,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig {
            f_lo: 1.0,
            f_hi: 45.0,
            order: 2,
            filter_mode: FilterMode::ZeroPhase,
            factor: 10,
            protocol: NoiseProtocol::default(),
        }
    }
}

/// Band-pass filters a record into ground truth.
pub fn ground_truth(x: &Signal, cfg: &DspConfig) -> Result<Signal> {
    let f = design_butterworth_bandpass(cfg.f_lo, cfg.f_hi, x.sample_rate(), cfg.order)?;
    apply(x, &f, cfg.filter_mode)
}

/// Resamples every recording of `bank` to `fs` (no-op for matching rates).
pub fn bank_at_rate(bank: &NoiseBank, fs: f64) -> Result<NoiseBank> {
    let mut out = NoiseBank::new();
    for kind in bank.kinds() {
        for rec in bank.recordings(kind) {
            let r = if rec.sample_rate() == fs { rec.clone() } else { resample_linear(rec, fs)? };
            out.push(kind, r);
        }
    }
    Ok(out)
}

/// Filter, skip-decimate and corrupt each record. Record `i` uses the RNG
/// stream `(seed, PREPARE, i)`, so the result does not depend on thread count.
pub fn make_pairs(records: &[Record], bank: &NoiseBank, cfg: &DspConfig, seed: u64) -> Result<Vec<SegmentPair>> {
    let lr_rates: Vec<f64> = records.iter().map(|r| r.signal.sample_rate() / cfg.factor.max(1) as f64).collect();
    let mut banks: Vec<(f64, NoiseBank)> = Vec::new();
    for &fs in &lr_rates {
        if !banks.iter().any(|(f, _)| *f == fs) {
            banks.push((fs, bank_at_rate(bank, fs)?));
        }
    }
    records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let gt = ground_truth(&rec.signal, cfg)?;
            let clean = decimate_skip(&gt, cfg.factor)?;
            let lr_bank = &banks.iter().find(|(f, _)| *f == clean.sample_rate()).expect("bank per rate").1;
            let mut rng = rng_for(seed, &[stream::PREPARE, i as u64]);
            let (lr, corruption) = corrupt_segment(&clean, lr_bank, &mut rng, &cfg.protocol)?;
            SegmentPair::new(rec.meta.id.clone(), rec.meta.fold, lr, gt, corruption)
        })
        .collect()
}

/// A desk-scale stand-in corpus: `n` synthetic records, heart rates in
/// 55-104 bpm, folds assigned round-robin 1..=10.
pub fn synth_records(seed: u64, n: usize, leads: usize, duration_s: f64, fs: f64) -> Result<Vec<Record>> {
    (0..n)
        .map(|i| {
            let bpm = 55.0 + (crate::seed::derive_seed(seed, &[stream::SYNTH, 100, i as u64]) % 50) as f64;
            let signal =
                synth_ecg(crate::seed::derive_seed(seed, &[stream::SYNTH, i as u64]), duration_s, fs, bpm, leads)?;
            let id = format!("syn{i:05}");
            let meta = RecordManifest {
                fold: (i % 10) as u8 + 1,
                leads,
                sample_rate: fs,
                length: signal.len(),
                path: format!("records/{id}.f32"),
                labels: None,
                id,
            };
            Ok(Record { meta, signal })
        })
        .collect()
}

/// One synthetic recording per kind, `duration_s` long at `fs`.
pub fn synth_noise_bank(seed: u64, duration_s: f64, fs: f64) -> Result<NoiseBank> {
    let mut bank = NoiseBank::new();
    for kind in NoiseKind::ALL {
        bank.push(kind, synth_noise(kind, seed, duration_s, fs)?);
    }
    Ok(bank)
}
