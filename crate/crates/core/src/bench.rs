//! Wall-clock comparison of the sequential and parallel scans.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::ssm::{scan_parallel, scan_sequential, ScanDims, ScanInputs};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub implementation: String,
    pub len: usize,
    pub median_s: f64,
    pub reps: usize,
    /// Largest |parallel - sequential| output difference at this length.
    pub max_abs_diff: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times both scans at every length (median of `reps` runs) after checking
/// that they agree. Errors if they differ by more than `1e-10`.
pub fn bench_scan(lengths: &[usize], reps: usize, d_inner: usize, d_state: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if reps == 0 {
        return Err(Error::Parameter("at least one repetition is needed".into()));
    }
    let mut rows = Vec::new();
    for (k, &len) in lengths.iter().enumerate() {
        let dims = ScanDims { len, d_inner, d_state };
        let mut rng = rng_for(seed, &[k as u64]);
        let n = len * d_inner * d_state;
        let abar: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..0.999)).collect();
        let bbar: Vec<f64> = (0..n).map(|_| rng.random_range(-0.1..0.1)).collect();
        let c: Vec<f64> = (0..len * d_state).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..len * d_inner).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d_skip = vec![1.0; d_inner];
        let inp = ScanInputs { abar: &abar, bbar: &bbar, c: &c, x: &x, d_skip: &d_skip, dims };

        let seq = scan_sequential(&inp)?.y;
        let par = scan_parallel(&inp)?.y;
        let diff = seq.iter().zip(&par).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if !(diff < 1e-10) {
            return Err(Error::Contract(format!("parallel scan differs from sequential by {diff} at L={len}")));
        }
        for (name, parallel) in [("sequential", false), ("parallel", true)] {
            let times = (0..reps)
                .map(|_| {
                    let t = Instant::now();
                    let out = if parallel { scan_parallel(&inp) } else { scan_sequential(&inp) };
                    std::hint::black_box(out.map(|o| o.y.len()))?;
                    Ok(t.elapsed().as_secs_f64())
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(BenchRow { implementation: name.into(), len, median_s: median(times), reps, max_abs_diff: diff });
        }
    }
    Ok(rows)
}

/// Least-squares line `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (my - slope * mx, slope, r2)
}

/// R² of runtime vs length for one implementation.
pub fn linearity(rows: &[BenchRow], implementation: &str) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|r| r.implementation == implementation).map(|r| (r.len as f64, r.median_s)).unzip();
    linear_fit(&x, &y).2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_row_per_implementation_and_length() {
        let rows = bench_scan(&[16, 64, 100], 3, 2, 3, 1).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.max_abs_diff < 1e-10 && r.median_s >= 0.0));
        assert_eq!(median(vec![3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
