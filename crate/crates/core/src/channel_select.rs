//! Envelope-variance microphone ranking.
//!
//! Reverberation smears sub-band envelopes and lowers the variance of their
//! log; channels with the most envelope variance are kept.

use ndarray::Array2;
use rayon::prelude::*;

use crate::audio::{stft, MultichannelWaveform, StftConfig, Window};
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvConfig {
    pub num_subbands: usize,
    pub frame: usize,
    pub hop: usize,
    pub keep_fraction: f64,
}

impl Default for EvConfig {
    fn default() -> Self {
        Self {
            num_subbands: 40,
            frame: 1024,
            hop: 256,
            keep_fraction: 0.8,
        }
    }
}

impl EvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subbands == 0 {
            return Err(Error::invalid("num_subbands must be >= 1"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "keep_fraction {} outside (0, 1]",
                self.keep_fraction
            )));
        }
        self.stft().validate()
    }

    fn stft(&self) -> StftConfig {
        StftConfig {
            window_length: self.frame,
            hop: self.hop,
            window: Window::Hann,
            fft_size: self.frame,
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters `(band, bin)` spanning 0 Hz to Nyquist. Bands too
/// narrow to cover a bin get the nearest bin so none is empty.
fn mel_filterbank(bands: usize, fft_size: usize, sample_rate: u32) -> Array2<f64> {
    let bins = fft_size / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / fft_size as f64;
    let mut fb = Array2::zeros((bands, bins));
    for b in 0..bands {
        let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
        for k in 0..bins {
            let hz = k as f64 * bin_hz;
            let w = if hz > lo && hz <= mid {
                (hz - lo) / (mid - lo)
            } else if hz > mid && hz < hi {
                (hi - hz) / (hi - mid)
            } else {
                0.0
            };
            fb[[b, k]] = w;
        }
        if fb.row(b).sum() == 0.0 {
            let k = ((mid / bin_hz).round() as usize).min(bins - 1);
            fb[[b, k]] = 1.0;
        }
    }
    fb
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Per-channel envelope-variance score; higher is better. Each sub-band's
/// variance is normalised by its maximum across channels, so scores lie in
/// `[0, num_subbands]`.
pub fn envelope_variance_scores(w: &MultichannelWaveform, cfg: &EvConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let spec = stft(w, &cfg.stft())?;
    let fb = mel_filterbank(cfg.num_subbands, cfg.frame, w.sample_rate());
    let (channels, frames, bins) = spec.data.dim();
    let v: Vec<Vec<f64>> = (0..channels)
        .into_par_iter()
        .map(|i| {
            let power = Array2::from_shape_fn((frames, bins), |(t, k)| spec.data[[i, t, k]].norm_sqr());
            let env = power.dot(&fb.t());
            (0..cfg.num_subbands)
                .map(|b| {
                    let col = env.column(b);
                    let mean = col.mean().unwrap_or(0.0);
                    if mean <= 0.0 {
                        return 0.0;
                    }
                    let logs: Vec<f64> = col.iter().map(|e| (e / mean).max(LOG_FLOOR).ln()).collect();
                    variance(&logs)
                })
                .collect()
        })
        .collect();
    let mut scores = vec![0.0; channels];
    for b in 0..cfg.num_subbands {
        let max = v.iter().map(|row| row[b]).fold(0.0f64, f64::max);
        if max > 0.0 {
            for (s, row) in scores.iter_mut().zip(&v) {
                *s += row[b] / max;
            }
        }
    }
    Ok(scores)
}

/// Top `max(1, floor(keep_fraction * I))` channels by score, ties to the
/// lower index, returned in ascending index order.
pub fn select_channels(scores: &[f64], keep_fraction: f64) -> Vec<usize> {
    if scores.is_empty() {
        return Vec::new();
    }
    // The epsilon keeps products like 0.8 * 10 from flooring to 7.
    let k = ((keep_fraction * scores.len() as f64 + 1e-9).floor() as usize).clamp(1, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    kept
}
