//! On-disk formats.
//!
//! * Raster: raw little-endian `f32`, channel-major, `.f32` extension.
//! * Record manifest: JSON lines, one [`RecordManifest`] per line; `path` is
//!   relative to the manifest's directory.
//! * Pair dataset: a directory holding `pairs.jsonl` ([`PairEntry`] lines),
//!   `noise.jsonl` ([`NoiseEntry`] lines) and the referenced rasters.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SegmentPair;
use crate::dsp::{CorruptionRecord, NoiseBank, NoiseKind, Signal};
use crate::error::{Error, Result};

/// One line of a record manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordManifest {
    pub id: String,
    pub fold: u8,
    pub leads: usize,
    pub sample_rate: f64,
    /// Samples per lead.
    pub length: usize,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<serde_json::Value>,
}

/// A loaded record.
#[derive(Clone, Debug)]
pub struct Record {
    pub meta: RecordManifest,
    pub signal: Signal,
}

pub fn write_raster(path: &Path, signal: &Signal) -> Result<()> {
    let bytes: Vec<u8> = signal.to_f32().iter().flat_map(|v| v.to_le_bytes()).collect();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a raster, checking its size against `channels x length`.
pub fn read_raster(path: &Path, channels: usize, length: usize, sample_rate: f64, record: &str) -> Result<Signal> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != channels * length {
        return Err(Error::LengthMismatch {
            record: record.to_string(),
            declared: channels * length,
            actual: bytes.len() / 4,
        });
    }
    let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
    Signal::new(channels, sample_rate, data)
}

/// Reads a raster whose length is implied by its size.
pub fn read_raster_any(path: &Path, channels: usize, sample_rate: f64) -> Result<Signal> {
    let size = fs::metadata(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?.len() as usize;
    if channels == 0 || !size.is_multiple_of(4 * channels) {
        return Err(Error::Dimension(format!(
            "{} bytes in {} cannot hold {channels} f32 channels",
            size,
            path.display()
        )));
    }
    let name = path.display().to_string();
    read_raster(path, channels, size / (4 * channels), sample_rate, &name)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads every record of a manifest, optionally keeping only some folds.
pub fn load_dataset(manifest: &Path, folds: Option<&[u8]>) -> Result<Vec<Record>> {
    let entries: Vec<RecordManifest> = read_jsonl(manifest)?;
    let base = base_dir(manifest);
    let mut out = Vec::new();
    for meta in entries {
        if !(1..=10).contains(&meta.fold) {
            return Err(Error::Config(format!("record `{}` has fold {} outside 1..=10", meta.id, meta.fold)));
        }
        if folds.is_some_and(|f| !f.contains(&meta.fold)) {
            continue;
        }
        let signal = read_raster(&base.join(&meta.path), meta.leads, meta.length, meta.sample_rate, &meta.id)?;
        out.push(Record { meta, signal });
    }
    Ok(out)
}

/// Writes the rasters of `records` next to a new manifest at `manifest`.
pub fn write_dataset(manifest: &Path, records: &[Record]) -> Result<()> {
    let base = base_dir(manifest);
    fs::create_dir_all(&base).map_err(|e| Error::io(&base, e))?;
    for r in records {
        write_raster(&base.join(&r.meta.path), &r.signal)?;
    }
    let metas: Vec<&RecordManifest> = records.iter().map(|r| &r.meta).collect();
    write_jsonl(manifest, &metas)
}

/// One line of `pairs.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub id: String,
    pub fold: u8,
    pub leads: usize,
    pub lr_rate: f64,
    pub hr_rate: f64,
    pub lr_length: usize,
    pub hr_length: usize,
    pub lr_path: String,
    pub hr_path: String,
    pub corruption: CorruptionRecord,
}

/// One line of `noise.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEntry {
    pub kind: NoiseKind,
    pub sample_rate: f64,
    pub length: usize,
    pub path: String,
}

pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const NOISE_FILE: &str = "noise.jsonl";

/// Prepared pairs plus the noise bank used for on-the-fly corruption.
#[derive(Clone, Debug, Default)]
pub struct PairDataset {
    pub pairs: Vec<SegmentPair>,
    pub noise: NoiseBank,
}

pub fn save_pair_dataset(dir: &Path, ds: &PairDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(ds.pairs.len());
    for p in &ds.pairs {
        let lr_path = format!("pairs/{}.lr.f32", p.id);
        let hr_path = format!("pairs/{}.hr.f32", p.id);
        write_raster(&dir.join(&lr_path), &p.lr)?;
        write_raster(&dir.join(&hr_path), &p.hr_gt)?;
        entries.push(PairEntry {
            id: p.id.clone(),
            fold: p.fold,
            leads: p.hr_gt.channels(),
            lr_rate: p.lr.sample_rate(),
            hr_rate: p.hr_gt.sample_rate(),
            lr_length: p.lr.len(),
            hr_length: p.hr_gt.len(),
            lr_path,
            hr_path,
            corruption: p.corruption.clone(),
        });
    }
    write_jsonl(&dir.join(PAIRS_FILE), &entries)?;
    save_noise_bank(dir, &ds.noise)
}

/// Writes `noise.jsonl` plus one mono raster per recording under `dir/noise/`.
pub fn save_noise_bank(dir: &Path, bank: &NoiseBank) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut noise = Vec::new();
    for kind in bank.kinds() {
        for (i, rec) in bank.recordings(kind).iter().enumerate() {
            let path = format!("noise/{}_{i}.f32", kind.code().to_lowercase());
            write_raster(&dir.join(&path), rec)?;
            noise.push(NoiseEntry { kind, sample_rate: rec.sample_rate(), length: rec.len(), path });
        }
    }
    write_jsonl(&dir.join(NOISE_FILE), &noise)
}

/// Reads a bank written by [`save_noise_bank`].
pub fn load_noise_bank(dir: &Path) -> Result<NoiseBank> {
    let mut noise = NoiseBank::new();
    for e in read_jsonl::<NoiseEntry>(&dir.join(NOISE_FILE))? {
        let name = format!("noise {}", e.path);
        noise.push(e.kind, read_raster(&dir.join(&e.path), 1, e.length, e.sample_rate, &name)?);
    }
    Ok(noise)
}

pub fn load_pair_dataset(dir: &Path) -> Result<PairDataset> {
    let entries: Vec<PairEntry> = read_jsonl(&dir.join(PAIRS_FILE))?;
    let mut pairs = Vec::with_capacity(entries.len());
    for e in entries {
        let lr = read_raster(&dir.join(&e.lr_path), e.leads, e.lr_length, e.lr_rate, &e.id)?;
        let hr_gt = read_raster(&dir.join(&e.hr_path), e.leads, e.hr_length, e.hr_rate, &e.id)?;
        pairs.push(SegmentPair::new(e.id, e.fold, lr, hr_gt, e.corruption)?);
    }
    let noise = if dir.join(NOISE_FILE).exists() { load_noise_bank(dir)? } else { NoiseBank::new() };
    Ok(PairDataset { pairs, noise })
}
