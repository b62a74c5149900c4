use std::f64::consts::PI;
use std::sync::OnceLock;

use super::Waveform;
use crate::error::{Error, Result};

const ZERO_CROSSINGS: usize = 32;
const TABLE_DENSITY: usize = 1024;
const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.97;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Kaiser-windowed sinc sampled on `[0, ZERO_CROSSINGS]` zero-crossing units.
fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ZERO_CROSSINGS * TABLE_DENSITY;
        let norm = bessel_i0(KAISER_BETA);
        (0..=n + 1)
            .map(|i| {
                let u = i as f64 / TABLE_DENSITY as f64;
                if u >= ZERO_CROSSINGS as f64 {
                    return 0.0;
                }
                let sinc = if u == 0.0 { 1.0 } else { (PI * u).sin() / (PI * u) };
                let r = u / ZERO_CROSSINGS as f64;
                sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            })
            .collect()
    })
}

fn kernel(u: f64) -> f64 {
    let table = kernel_table();
    let pos = u.abs() * TABLE_DENSITY as f64;
    let i = pos as usize;
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - i as f64;
    table[i] * (1.0 - frac) + table[i + 1] * frac
}

/// Band-limited interpolation `y[n] = x(n * step)` for `n < out_len`, where
/// `step` is input samples per output sample. The anti-aliasing cutoff
/// follows the lower of the two rates.
pub fn resample_by_ratio(x: &[f64], step: f64, out_len: usize) -> Vec<f64> {
    let fc = ROLLOFF * (1.0 / step).min(1.0);
    let half = ZERO_CROSSINGS as f64 / fc;
    (0..out_len)
        .map(|n| {
            let pos = n as f64 * step;
            let lo = (pos - half).ceil().max(0.0) as usize;
            let hi = ((pos + half).floor() as usize).min(x.len().saturating_sub(1));
            let mut acc = 0.0;
            if lo <= hi {
                for (k, &xv) in x.iter().enumerate().take(hi + 1).skip(lo) {
                    acc += xv * kernel(fc * (pos - k as f64));
                }
            }
            fc * acc
        })
        .collect()
}

/// Sample-rate conversion; output length is `round(len * target / source)`.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::invalid("target rate must be positive"));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let out_len = (w.len() as f64 * target_rate as f64 / w.sample_rate as f64).round() as usize;
    let step = w.sample_rate as f64 / target_rate as f64;
    Ok(Waveform {
        samples: resample_by_ratio(&w.samples, step, out_len),
        sample_rate: target_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, len: usize) -> Waveform {
        let samples = (0..len)
            .map(|n| (2.0 * PI * freq * n as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    /// Amplitude of the DFT at `freq`, evaluated directly on the middle of the
    /// signal.
    fn amplitude_at(x: &[f64], rate: u32, freq: f64) -> f64 {
        let seg = &x[x.len() / 4..3 * x.len() / 4];
        let (mut re, mut im) = (0.0, 0.0);
        for (n, v) in seg.iter().enumerate() {
            let ph = 2.0 * PI * freq * n as f64 / rate as f64;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        2.0 * (re * re + im * im).sqrt() / seg.len() as f64
    }

    #[test]
    fn same_rate_is_identity() {
        let w = tone(440.0, 16_000, 1000);
        assert_eq!(resample(&w, 16_000).unwrap(), w);
    }

    #[test]
    fn length_rule() {
        let w = tone(440.0, 16_000, 16_000);
        assert_eq!(resample(&w, 8000).unwrap().len(), 8000);
        assert_eq!(resample(&w, 44_100).unwrap().len(), 44_100);
        assert_eq!(resample(&tone(1.0, 16_000, 1001), 8000).unwrap().len(), 501);
    }

    #[test]
    fn downsampled_tone_keeps_peak_and_amplitude() {
        let w = tone(1000.0, 16_000, 16_000);
        let y = resample(&w, 8000).unwrap();
        let a = amplitude_at(&y.samples, 8000, 1000.0);
        assert!((a - 1.0).abs() < 0.01, "amplitude {a}");
        // neighbouring frequencies carry far less energy
        assert!(amplitude_at(&y.samples, 8000, 1100.0) < 0.05);
    }

    #[test]
    fn zero_rate_rejected() {
        assert!(resample(&tone(1.0, 16_000, 10), 0).is_err());
    }
}
