use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{s, Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::MultichannelWaveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann.
    Hann,
    /// Periodic Hamming.
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        let n = len as f64;
        (0..len)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_length: usize,
    pub hop: usize,
    pub window: Window,
    pub fft_size: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_length: 1024,
            hop: 256,
            window: Window::Hann,
            fft_size: 1024,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_length || self.window_length > self.fft_size {
            return Err(Error::invalid(format!(
                "STFT needs 0 < hop <= window_length <= fft_size, got hop={} window={} fft={}",
                self.hop, self.window_length, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Samples of reflective padding added on each side.
    pub fn pad(&self) -> usize {
        self.window_length / 2
    }

    pub fn num_frames(&self, len: usize) -> usize {
        1 + (len + 2 * self.pad() - self.window_length) / self.hop
    }

    /// Sample (in unpadded coordinates) at the centre of frame `t`.
    pub fn frame_center(&self, t: usize) -> i64 {
        (t * self.hop) as i64
    }

    /// Unpadded sample span `[start, end)` covered by frame `t`.
    pub fn frame_span(&self, t: usize) -> (i64, i64) {
        let start = self.frame_center(t) - self.pad() as i64;
        (start, start + self.window_length as i64)
    }

    /// Largest relative deviation of the overlapped squared window from its mean.
    pub fn cola_deviation(&self) -> f64 {
        let w = self.window.coefficients(self.window_length);
        let mut acc = vec![0.0; self.hop];
        for (i, c) in w.iter().enumerate() {
            acc[i % self.hop] += c * c;
        }
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        acc.iter().fold(0.0f64, |m, a| m.max((a - mean).abs())) / mean
    }
}

/// Complex half-spectrum indexed `(channel, frame, bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array3<Complex64>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn new(data: Array3<Complex64>, config: StftConfig, sample_rate: u32) -> Result<Self> {
        config.validate()?;
        if data.len_of(Axis(2)) != config.num_bins() {
            return Err(Error::shape(format!(
                "{} bins given, config implies {}",
                data.len_of(Axis(2)),
                config.num_bins()
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            data,
            config,
            sample_rate,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn num_frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn num_bins(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn with_data(&self, data: Array3<Complex64>) -> Self {
        Self {
            data,
            config: self.config,
            sample_rate: self.sample_rate,
        }
    }

    pub fn slice_frames(&self, frames: Range<usize>) -> Result<Self> {
        if frames.start > frames.end || frames.end > self.num_frames() {
            return Err(Error::invalid(format!(
                "frame range {frames:?} outside 0..{}",
                self.num_frames()
            )));
        }
        Ok(self.with_data(self.data.slice(s![.., frames, ..]).to_owned()))
    }

    pub fn select_channels(&self, indices: &[usize]) -> Self {
        self.with_data(self.data.select(Axis(0), indices))
    }

    /// Per-bin observation matrix `(frame, channel)` for bin `f`.
    pub fn bin_matrix(&self, f: usize) -> Array2<Complex64> {
        self.data.slice(s![.., .., f]).t().to_owned()
    }

    /// Energy of the windowed frame recovered from the half spectrum.
    pub fn frame_energy(&self, channel: usize, frame: usize) -> f64 {
        let n = self.config.fft_size;
        let row = self.data.slice(s![channel, frame, ..]);
        let mut e = 0.0;
        for (k, v) in row.iter().enumerate() {
            let full = k == 0 || (n % 2 == 0 && k == n / 2);
            e += if full { v.norm_sqr() } else { 2.0 * v.norm_sqr() };
        }
        e / n as f64
    }
}

fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|k| x[k]));
    out.extend_from_slice(x);
    out.extend((0..pad).map(|k| x[n - 2 - k]));
    out
}

/// Short-time Fourier transform of every channel with reflective
/// half-window padding at both edges.
pub fn stft(w: &MultichannelWaveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let len = w.len();
    if len < cfg.window_length || len < 2 {
        return Err(Error::TooShort {
            len,
            needed: cfg.window_length.max(2),
        });
    }
    let frames = cfg.num_frames(len);
    let bins = cfg.num_bins();
    let window = cfg.window.coefficients(cfg.window_length);
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);

    let per_channel: Vec<Array2<Complex64>> = w
        .data()
        .outer_iter()
        .into_par_iter()
        .map(|row| {
            let padded = reflect_pad(row.as_slice().expect("standard layout"), cfg.pad());
            let mut out = Array2::zeros((frames, bins));
            let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for t in 0..frames {
                let start = t * cfg.hop;
                buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
                for (i, wv) in window.iter().enumerate() {
                    buf[i] = Complex64::new(padded[start + i] * wv, 0.0);
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                out.row_mut(t).assign(&ndarray::ArrayView1::from(&buf[..bins]));
            }
            out
        })
        .collect();

    let mut data = Array3::zeros((w.num_channels(), frames, bins));
    for (mut dst, src) in data.outer_iter_mut().zip(per_channel) {
        dst.assign(&src);
    }
    Ok(Spectrogram {
        data,
        config: *cfg,
        sample_rate: w.sample_rate(),
    })
}

/// Weighted overlap-add synthesis, normalised by the per-sample sum of
/// squared windows, trimmed or zero-padded to `out_length`.
pub fn istft(s: &Spectrogram, cfg: &StftConfig, out_length: usize) -> Result<MultichannelWaveform> {
    cfg.validate()?;
    if s.config != *cfg {
        return Err(Error::invalid(
            "synthesis config differs from the analysis config",
        ));
    }
    let frames = s.num_frames();
    if frames == 0 {
        return Err(Error::invalid("spectrogram has no frames"));
    }
    let n = cfg.fft_size;
    let window = cfg.window.coefficients(cfg.window_length);
    let padded_len = (frames - 1) * cfg.hop + cfg.window_length;
    let mut norm = vec![0.0; padded_len];
    for t in 0..frames {
        for (i, wv) in window.iter().enumerate() {
            norm[t * cfg.hop + i] += wv * wv;
        }
    }
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let pad = cfg.pad();

    let channels: Vec<Vec<f64>> = s
        .data
        .outer_iter()
        .into_par_iter()
        .map(|spec| {
            let mut acc = vec![0.0; padded_len];
            let mut buf = vec![Complex64::new(0.0, 0.0); n];
            let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
            for t in 0..frames {
                let row = spec.row(t);
                for k in 0..n {
                    buf[k] = if k < row.len() {
                        row[k]
                    } else {
                        row[n - k].conj()
                    };
                }
                // DC and Nyquist of a real frame are real.
                buf[0].im = 0.0;
                if n % 2 == 0 {
                    buf[n / 2].im = 0.0;
                }
                ifft.process_with_scratch(&mut buf, &mut scratch);
                for (i, wv) in window.iter().enumerate() {
                    acc[t * cfg.hop + i] += buf[i].re / n as f64 * wv;
                }
            }
            (0..out_length)
                .map(|i| {
                    let p = i + pad;
                    if p < padded_len && norm[p] > 1e-10 {
                        acc[p] / norm[p]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let mut data = Array2::zeros((channels.len(), out_length));
    for (mut dst, src) in data.outer_iter_mut().zip(channels) {
        dst.assign(&ndarray::ArrayView1::from(&src));
    }
    MultichannelWaveform::new(data, s.sample_rate)
}
