//! Mamba-style selective state-space super-resolution for 12-lead ECG.
//!
//! The crate covers the full pipeline: band-pass ground truth preparation,
//! skip decimation and noise corruption ([`dsp`]), a tape-based autodiff
//! engine ([`grad`]), the selective scan ([`ssm`]), the network itself
//! ([`model`]), training ([`train`]), metrics ([`eval`]) and dataset I/O
//! with synthetic generators ([`data`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod grad;
pub mod model;
pub mod real;
pub mod seed;
pub mod ssm;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
