use wasm_bindgen::prelude::*;

use msecg::data::{ground_truth, synth_ecg, synth_noise, DspConfig};
use msecg::dsp::{decimate_skip, design_butterworth_bandpass, linear_interp_upsample, mix_noise_at_snr, NoiseKind};
use msecg::eval::SegmentMetrics;
use msecg::ssm::{discretize, scan_parallel, scan_sequential, Discretization, ScanDims, ScanInputs};
use msecg::{Error, Result};

pub const DEMO_FS: f64 = 500.0;
pub const DEMO_SECONDS: f64 = 4.0;

pub fn filter_response(f_lo: f64, f_hi: f64, fs: f64, order: usize, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::Parameter("need at least two frequency points".into()));
    }
    let f = design_butterworth_bandpass(f_lo, f_hi, fs, order)?;
    Ok((0..points).map(|i| f.gain_db(0.5 * fs * i as f64 / (points - 1) as f64, fs)).collect())
}

/// Series at the high rate (`gt`, `li`) and low rate (`lr`), plus LI metrics.
#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct Degraded {
    gt: Vec<f64>,
    lr: Vec<f64>,
    li: Vec<f64>,
    metrics: SegmentMetrics,
}

#[wasm_bindgen]
impl Degraded {
    pub fn gt(&self) -> Vec<f64> {
        self.gt.clone()
    }
    pub fn lr(&self) -> Vec<f64> {
        self.lr.clone()
    }
    pub fn li(&self) -> Vec<f64> {
        self.li.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn mse(&self) -> f64 {
        self.metrics.mse
    }
    #[wasm_bindgen(getter)]
    pub fn cos(&self) -> f64 {
        self.metrics.cos
    }
    #[wasm_bindgen(getter, js_name = snrDb)]
    pub fn snr_db(&self) -> f64 {
        self.metrics.snr_db
    }
    #[wasm_bindgen(getter)]
    pub fn mad(&self) -> f64 {
        self.metrics.mad
    }
}

pub fn degrade(seed: u64, ratio: usize, noise: &str, snr_db: f64) -> Result<Degraded> {
    let raw = synth_ecg(seed, DEMO_SECONDS, DEMO_FS, 72.0, 1)?;
    let gt = ground_truth(&raw, &DspConfig { factor: ratio, ..DspConfig::default() })?;
    let clean = decimate_skip(&gt, ratio)?;
    let lr = if noise.eq_ignore_ascii_case("none") {
        clean
    } else {
        let kind: NoiseKind = noise.parse()?;
        let n = synth_noise(kind, seed ^ 0x5eed, DEMO_SECONDS, clean.sample_rate())?;
        let n = n.window(0, clean.len())?;
        mix_noise_at_snr(&clean, &n, snr_db)?
    };
    let li = linear_interp_upsample(&lr, ratio)?;
    let metrics = SegmentMetrics::compute("demo", !noise.eq_ignore_ascii_case("none"), &li, &gt)?;
    Ok(Degraded { gt: gt.into_data(), lr: lr.into_data(), li: li.into_data(), metrics })
}

#[wasm_bindgen]
#[derive(Clone, Debug)]
pub struct ScanResponse {
    sequential: Vec<f64>,
    parallel: Vec<f64>,
}

#[wasm_bindgen]
impl ScanResponse {
    pub fn sequential(&self) -> Vec<f64> {
        self.sequential.clone()
    }
    pub fn parallel(&self) -> Vec<f64> {
        self.parallel.clone()
    }
    #[wasm_bindgen(getter, js_name = maxAbsDiff)]
    pub fn max_abs_diff(&self) -> f64 {
        self.sequential.iter().zip(&self.parallel).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// One channel, `A = -(1..=d_state)`, `B = C = 1`, `D = 0`, constant `delta`,
/// unit impulse at step 0.
pub fn scan_impulse(d_state: usize, delta: f64, len: usize, zoh: bool) -> Result<ScanResponse> {
    if d_state == 0 || len == 0 {
        return Err(Error::Parameter("d_state and len must be positive".into()));
    }
    let dims = ScanDims { len, d_inner: 1, d_state };
    let a: Vec<f64> = (1..=d_state).map(|s| -(s as f64)).collect();
    let b = vec![1.0; len * d_state];
    let c = vec![1.0; len * d_state];
    let mut x = vec![0.0; len];
    x[0] = 1.0;
    let mode = if zoh { Discretization::ZohExact } else { Discretization::Euler };
    let (abar, bbar) = discretize(&vec![delta; len], &a, &b, dims, mode)?;
    let inp = ScanInputs { abar: &abar, bbar: &bbar, c: &c, x: &x, d_skip: &[0.0], dims };
    Ok(ScanResponse { sequential: scan_sequential(&inp)?.y, parallel: scan_parallel(&inp)?.y })
}
