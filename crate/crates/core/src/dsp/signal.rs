use crate::error::{Error, Result};

/// Multichannel sampled waveform, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    channels: usize,
    sample_rate: f64,
    data: Vec<f64>,
}

impl Signal {
    pub fn new(channels: usize, sample_rate: f64, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Parameter("signal needs at least one channel".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Parameter(format!("sample rate must be positive, got {sample_rate}")));
        }
        if data.is_empty() || !data.len().is_multiple_of(channels) {
            return Err(Error::Dimension(format!(
                "{} samples cannot be split into {channels} non-empty channels",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "Signal::new" });
        }
        Ok(Signal { channels, sample_rate, data })
    }

    pub fn from_channels(sample_rate: f64, channels: &[Vec<f64>]) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Dimension("channels differ in length".into()));
        }
        Signal::new(channels.len(), sample_rate, channels.concat())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let len = self.len();
        &self.data[c * len..(c + 1) * len]
    }

    pub fn iter_channels(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.len())
    }

    /// Mean square over all channels and samples.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64
    }

    /// Same shape, new samples.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Signal::new(self.channels, self.sample_rate, data)
    }

    /// Applies `f` to each channel independently; every output channel must share one length.
    pub(crate) fn map_channels(&self, sample_rate: f64, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let out: Vec<Vec<f64>> = self.iter_channels().map(&mut f).collect();
        Signal::from_channels(sample_rate, &out)
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.len() {
            return Err(Error::Dimension(format!(
                "window {start}..{} outside signal of length {}",
                start + len,
                self.len()
            )));
        }
        self.map_channels(self.sample_rate, |c| c[start..start + len].to_vec())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}
