//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions in [`ops`] do the work and are what native tests call;
//! the `#[wasm_bindgen]` exports below only convert errors for JavaScript.

pub mod ops;

use wasm_bindgen::prelude::*;

pub use ops::{Degraded, ScanResponse};

/// Butterworth band-pass gain in dB at `points` frequencies spanning 0..fs/2.
#[wasm_bindgen(js_name = filterResponse)]
pub fn filter_response(f_lo: f64, f_hi: f64, fs: f64, order: usize, points: usize) -> Result<Vec<f64>, JsError> {
    ops::filter_response(f_lo, f_hi, fs, order, points).map_err(|e| JsError::new(&e.to_string()))
}

/// Synthetic single-lead ECG -> band-pass GT -> skip decimation by `ratio`
/// -> optional noise (`"none"`, `"BW"`, `"MA"`, `"EM"`) at `snr_db` -> LI.
#[wasm_bindgen]
pub fn degrade(seed: u64, ratio: usize, noise: &str, snr_db: f64) -> Result<Degraded, JsError> {
    ops::degrade(seed, ratio, noise, snr_db).map_err(|e| JsError::new(&e.to_string()))
}

/// Impulse response of a diagonal SSM with `d_state` modes, via both scans.
#[wasm_bindgen(js_name = scanImpulse)]
pub fn scan_impulse(d_state: usize, delta: f64, len: usize, zoh: bool) -> Result<ScanResponse, JsError> {
    ops::scan_impulse(d_state, delta, len, zoh).map_err(|e| JsError::new(&e.to_string()))
}
