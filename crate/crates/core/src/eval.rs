//! Reconstruction metrics and mean ± std aggregation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SegmentPair;
use crate::dsp::{linear_interp_upsample, Signal};
use crate::error::{Error, Result};
use crate::model::{infer, ModelConfig, ModelParams};

fn check(s: &[f64], g: &[f64]) -> Result<()> {
    if s.len() != g.len() {
        return Err(Error::Dimension(format!("length mismatch: {} vs {}", s.len(), g.len())));
    }
    if s.is_empty() {
        return Err(Error::Dimension("empty input".into()));
    }
    Ok(())
}

/// `(1/N) sum (s - g)^2`
pub fn mse(s: &[f64], g: &[f64]) -> Result<f64> {
    check(s, g)?;
    Ok(s.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s.len() as f64)
}

/// `s . g / (|s| |g|)`; a zero-norm input is an error.
pub fn cosine_similarity(s: &[f64], g: &[f64]) -> Result<f64> {
    check(s, g)?;
    let dot: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
    let ns = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ng = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if ns == 0.0 || ng == 0.0 {
        return Err(Error::Parameter("cosine similarity of a zero-norm vector".into()));
    }
    Ok((dot / (ns * ng)).clamp(-1.0, 1.0))
}

/// `10 log10(sum g^2 / sum (s - g)^2)`; `+inf` when `s == g`.
pub fn snr_db(s: &[f64], g: &[f64]) -> Result<f64> {
    check(s, g)?;
    let num: f64 = g.iter().map(|v| v * v).sum();
    let den: f64 = s.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    if den == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (num / den).log10())
}

/// `max |s - g|`
pub fn mad(s: &[f64], g: &[f64]) -> Result<f64> {
    check(s, g)?;
    Ok(s.iter().zip(g).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Metrics of one segment, computed over the flattened multi-lead waveform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub id: String,
    pub noisy: bool,
    pub mse: f64,
    pub cos: f64,
    pub snr_db: f64,
    pub mad: f64,
}

impl SegmentMetrics {
    pub fn compute(id: &str, noisy: bool, s: &Signal, g: &Signal) -> Result<Self> {
        if s.channels() != g.channels() || s.len() != g.len() {
            return Err(Error::Dimension(format!(
                "segment `{id}`: prediction [{}, {}] vs ground truth [{}, {}]",
                s.channels(),
                s.len(),
                g.channels(),
                g.len()
            )));
        }
        let (s, g) = (s.data(), g.data());
        Ok(SegmentMetrics {
            id: id.to_string(),
            noisy,
            mse: mse(s, g)?,
            cos: cosine_similarity(s, g)?,
            snr_db: snr_db(s, g)?,
            mad: mad(s, g)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation; `std = 0` for a single value.
pub fn mean_std(v: &[f64]) -> MeanStd {
    if v.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std =
        if v.len() < 2 { 0.0 } else { (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt() };
    MeanStd { mean, std }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mse: MeanStd,
    pub cos: MeanStd,
    /// Over finite values only.
    pub snr_db: MeanStd,
    pub mad: MeanStd,
    pub count: usize,
    /// Segments with `s == g`, left out of the SNR aggregate.
    pub snr_infinite: usize,
}

impl Summary {
    pub fn from_segments(rows: &[SegmentMetrics]) -> Self {
        let col = |f: fn(&SegmentMetrics) -> f64| rows.iter().map(f).collect::<Vec<_>>();
        let snr: Vec<f64> = rows.iter().map(|r| r.snr_db).filter(|v| v.is_finite()).collect();
        Summary {
            mse: mean_std(&col(|r| r.mse)),
            cos: mean_std(&col(|r| r.cos)),
            snr_db: mean_std(&snr),
            mad: mean_std(&col(|r| r.mad)),
            count: rows.len(),
            snr_infinite: rows.len() - snr.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub segments: Vec<SegmentMetrics>,
    pub summary: Summary,
}

/// What produces the high-rate reconstruction.
pub enum Method<'a> {
    /// Linear interpolation of the LR input.
    Li {
        ratio: usize,
    },
    Model {
        params: &'a ModelParams<f32>,
        cfg: &'a ModelConfig,
    },
}

impl Method<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Li { .. } => "LI",
            Method::Model { .. } => "MSECG",
        }
    }

    pub fn reconstruct(&self, lr: &Signal) -> Result<Signal> {
        match self {
            Method::Li { ratio } => linear_interp_upsample(lr, *ratio),
            Method::Model { params, cfg } => infer(*params, cfg, lr),
        }
    }
}

/// Per-segment metrics (computed in parallel, kept in input order) and their aggregate.
pub fn evaluate(method: &Method<'_>, pairs: &[SegmentPair]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let segments: Vec<SegmentMetrics> = pairs
        .par_iter()
        .map(|p| {
            let s = method.reconstruct(&p.lr)?;
            SegmentMetrics::compute(&p.id, p.corruption.is_noisy(), &s, &p.hr_gt)
        })
        .collect::<Result<_>>()?;
    let summary = Summary::from_segments(&segments);
    Ok(MetricsReport { method: method.name().to_string(), segments, summary })
}

impl MetricsReport {
    /// Report restricted to clean or noisy segments.
    pub fn subset(&self, noisy: bool) -> Option<MetricsReport> {
        let segments: Vec<SegmentMetrics> = self.segments.iter().filter(|s| s.noisy == noisy).cloned().collect();
        if segments.is_empty() {
            return None;
        }
        let summary = Summary::from_segments(&segments);
        Some(MetricsReport { method: self.method.clone(), segments, summary })
    }

    /// One row per segment, then `mean` and `std` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for s in &self.segments {
            w.serialize(s).map_err(|e| csv_err(path, e))?;
        }
        let s = &self.summary;
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let v = |m: MeanStd| if pick == 0 { m.mean } else { m.std };
            w.serialize(SegmentMetrics {
                id: label.into(),
                noisy: false,
                mse: v(s.mse),
                cos: v(s.cos),
                snr_db: v(s.snr_db),
                mad: v(s.mad),
            })
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::CorruptionRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn analytic_cases() {
        let g = [1.0, -2.0, 3.0];
        let s1: Vec<f64> = g.iter().map(|v| v + 1.0).collect();
        assert_eq!(mse(&g, &g).unwrap(), 0.0);
        assert_eq!(mse(&s1, &g).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&g, &g).unwrap(), 1.0);
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert_eq!(cosine_similarity(&neg, &g).unwrap(), -1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert_eq!(snr_db(&g, &g).unwrap(), f64::INFINITY);
        assert_eq!(mad(&g, &g).unwrap(), 0.0);
        let mut spike = g;
        spike[1] += 0.5;
        assert_eq!(mad(&spike, &g).unwrap(), 0.5);
        assert!(matches!(mse(&[1.0], &g), Err(Error::Dimension(_))));
    }

    #[test]
    fn snr_closed_forms() {
        let g = [3.0, 4.0];
        let n = [5.0, 0.0];
        let s: Vec<f64> = g.iter().zip(&n).map(|(a, b)| a + b).collect();
        assert!(snr_db(&s, &g).unwrap().abs() < 1e-12);
        let s: Vec<f64> = g.iter().zip(&n).map(|(a, b)| a + 0.1 * b).collect();
        assert!((snr_db(&s, &g).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_match_loops_and_orderings() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let g = rand_vec(&mut rng, 100);
            let s = rand_vec(&mut rng, 100);
            let mut acc = 0.0;
            for i in 0..100 {
                acc += (s[i] - g[i]).powi(2);
            }
            assert!((mse(&s, &g).unwrap() - acc / 100.0).abs() < 1e-15);
            assert!(mad(&s, &g).unwrap().powi(2) >= mse(&s, &g).unwrap());
            let c = cosine_similarity(&s, &g).unwrap();
            let scaled: Vec<f64> = s.iter().map(|v| 3.7 * v).collect();
            assert!((cosine_similarity(&scaled, &g).unwrap() - c).abs() < 1e-12);
            let closer: Vec<f64> = s.iter().zip(&g).map(|(a, b)| b + 0.5 * (a - b)).collect();
            assert!(mse(&closer, &g).unwrap() < mse(&s, &g).unwrap());
            assert!(snr_db(&closer, &g).unwrap() > snr_db(&s, &g).unwrap());
        }
    }

    #[test]
    fn aggregation_conventions() {
        let one = mean_std(&[2.5]);
        assert_eq!((one.mean, one.std), (2.5, 0.0));
        let m = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    fn pair(id: &str, lr: Vec<f64>, gt: Vec<f64>) -> SegmentPair {
        SegmentPair::new(
            id.into(),
            10,
            Signal::new(1, 50.0, lr).unwrap(),
            Signal::new(1, 500.0, gt).unwrap(),
            CorruptionRecord::Clean,
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictions_report() {
        // a linear ramp with a held tail is reproduced exactly by LI
        let lr = vec![0.0, 10.0];
        let gt: Vec<f64> = (0..20).map(|i| (i.min(10)) as f64).collect();
        let pairs = vec![pair("a", lr.clone(), gt.clone()), pair("b", lr, gt)];
        let r = evaluate(&Method::Li { ratio: 10 }, &pairs).unwrap();
        assert_eq!(r.summary.mse.mean, 0.0);
        assert_eq!(r.summary.cos.mean, 1.0);
        assert_eq!(r.summary.mad.mean, 0.0);
        assert_eq!(r.summary.snr_infinite, 2);
        assert!(evaluate(&Method::Li { ratio: 10 }, &[]).is_err());
    }

    #[test]
    fn reports_serialize_consistently() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<SegmentPair> =
            (0..3).map(|i| pair(&format!("p{i}"), rand_vec(&mut rng, 8), rand_vec(&mut rng, 80))).collect();
        let r = evaluate(&Method::Li { ratio: 10 }, &pairs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write_json(&dir.path().join("r.json")).unwrap();
        r.write_csv(&dir.path().join("r.csv")).unwrap();
        let back: MetricsReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(back, r);
        let mut rd = csv::Reader::from_path(dir.path().join("r.csv")).unwrap();
        let rows: Vec<SegmentMetrics> = rd.deserialize().map(|x| x.unwrap()).collect();
        assert_eq!(&rows[..3], &r.segments[..]);
        assert_eq!(rows[3].mse, r.summary.mse.mean);
        assert_eq!(rows[4].mad, r.summary.mad.std);
    }
}
