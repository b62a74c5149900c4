//! Audio containers and the signal plumbing shared by every stage:
//! WAV I/O, STFT analysis/synthesis, resampling and FFT convolution.

mod conv;
mod resample;
mod stft;
pub(crate) mod wav;

use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

pub use conv::fft_convolve;
pub use resample::{resample, resample_by_ratio};
pub use stft::{istft, stft, Spectrogram, StftConfig, Window};
pub use wav::{read_wav, write_wav, BitDepth};

/// Sample rate every enhancement stage runs at.
pub const PROCESSING_RATE: u32 = 16_000;

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square over the whole signal.
    pub fn power(&self) -> f64 {
        power(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}

pub(crate) fn power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// Equal-length channels sharing one sample rate, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelWaveform {
    data: Array2<f64>,
    sample_rate: u32,
}

impl MultichannelWaveform {
    /// `data` is indexed `(channel, sample)`.
    pub fn new(data: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if data.nrows() == 0 {
            return Err(Error::invalid("at least one channel is required"));
        }
        if data.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { data, sample_rate })
    }

    pub fn from_channels(channels: Vec<Waveform>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::invalid("at least one channel is required"))?;
        let (len, rate) = (first.len(), first.sample_rate);
        if let Some(bad) = channels
            .iter()
            .position(|c| c.len() != len || c.sample_rate != rate)
        {
            return Err(Error::shape(format!(
                "channel {bad} differs in length or sample rate from channel 0"
            )));
        }
        let mut data = Array2::zeros((channels.len(), len));
        for (mut row, ch) in data.outer_iter_mut().zip(&channels) {
            row.assign(&ArrayView1::from(&ch.samples));
        }
        Self::new(data, rate)
    }

    pub fn from_mono(w: Waveform) -> Self {
        let len = w.len();
        Self {
            data: Array2::from_shape_vec((1, len), w.samples).expect("shape matches length"),
            sample_rate: w.sample_rate,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn channel(&self, i: usize) -> Waveform {
        Waveform {
            samples: self.data.row(i).to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn channels(&self) -> Vec<Waveform> {
        (0..self.num_channels()).map(|i| self.channel(i)).collect()
    }

    /// Keeps the listed channels, in the given order.
    pub fn select_channels(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("channel selection is empty"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.num_channels()) {
            return Err(Error::invalid(format!("channel {bad} out of range")));
        }
        Ok(Self {
            data: self.data.select(Axis(0), indices),
            sample_rate: self.sample_rate,
        })
    }

    /// Samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::invalid(format!(
                "sample range {start}..{end} outside 0..{}",
                self.len()
            )));
        }
        Ok(Self {
            data: self.data.slice(ndarray::s![.., start..end]).to_owned(),
            sample_rate: self.sample_rate,
        })
    }

    /// Resamples every channel to `rate`; identity if already there.
    pub fn resampled(&self, rate: u32) -> Result<Self> {
        if rate == self.sample_rate {
            return Ok(self.clone());
        }
        let channels = self
            .channels()
            .iter()
            .map(|c| resample(c, rate))
            .collect::<Result<Vec<_>>>()?;
        Self::from_channels(channels)
    }
}
