//! Ground-truth preparation and degradation: band-pass filtering, skip
//! decimation, linear-interpolation upsampling and SNR-controlled noise mixing.

mod degrade;
mod filter;
mod signal;

pub use degrade::{
    corrupt_segment, decimate_skip, linear_interp_upsample, mix_noise_at_snr, noise_gain, resample_linear,
    upsample_channel, CorruptionRecord, NoiseBank, NoiseKind, NoiseProtocol,
};
pub use filter::{apply, apply_zero_phase, design_butterworth_bandpass, Biquad, BiquadCascade, FilterMode};
pub use signal::Signal;
