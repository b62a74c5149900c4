use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{fft_convolve, power, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    /// `[low, high]` in dB, drawn uniformly.
    pub snr_db_range: [f64; 2],
    /// Silence added on both sides of the background before the offset draw.
    pub pad_secs: f64,
    pub codec_prob: f64,
    pub seed: u64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            snr_db_range: [5.0, 12.0],
            pad_secs: 4.0,
            codec_prob: 1.0 / 7.0,
            seed: 0,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.snr_db_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::invalid(format!("SNR range [{lo}, {hi}] is not ordered")));
        }
        if !(self.pad_secs >= 0.0) {
            return Err(Error::invalid("pad_secs must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.codec_prob) {
            return Err(Error::invalid("codec_prob must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A mixture together with the parts it was summed from.
#[derive(Debug, Clone, PartialEq)]
pub struct MixResult {
    pub mixture: Waveform,
    /// Reverberant primary, truncated to the primary length.
    pub primary: Waveform,
    /// Reverberant background after SNR scaling.
    pub background: Waveform,
    pub snr_db: f64,
    /// Start of the background excerpt within the padded background.
    pub offset: usize,
    pub gain: f64,
}

/// Background excerpt of `len` samples starting at `offset` in the padded
/// background, wrapping around to the start when it runs out.
pub fn background_excerpt(background: &[f64], pad: usize, offset: usize, len: usize) -> Vec<f64> {
    let padded_len = background.len() + 2 * pad;
    (0..len)
        .map(|i| {
            let j = (offset + i) % padded_len;
            if j < pad || j >= pad + background.len() {
                0.0
            } else {
                background[j - pad]
            }
        })
        .collect()
}

/// Deterministic core of [`mix_background_speaker`]: the offset and target
/// SNR are given.
pub fn mix_at(
    primary: &Waveform,
    background: &Waveform,
    rir_p: &Waveform,
    rir_b: &Waveform,
    pad: usize,
    offset: usize,
    snr_db: f64,
) -> Result<MixResult> {
    let rate = primary.sample_rate;
    if [background.sample_rate, rir_p.sample_rate, rir_b.sample_rate]
        .iter()
        .any(|&r| r != rate)
    {
        return Err(Error::invalid("all signals must share one sample rate"));
    }
    if background.is_empty() && pad == 0 {
        return Err(Error::Silent("background"));
    }
    let n = primary.len();
    let excerpt = background_excerpt(&background.samples, pad, offset, n);
    let mut p = fft_convolve(&primary.samples, &rir_p.samples);
    let mut b = fft_convolve(&excerpt, &rir_b.samples);
    p.resize(n, 0.0);
    b.resize(n, 0.0);
    let (pp, pb) = (power(&p), power(&b));
    if pp <= 0.0 {
        return Err(Error::Silent("primary"));
    }
    if pb <= 0.0 {
        return Err(Error::Silent("background"));
    }
    let gain = (pp / (pb * 10f64.powf(snr_db / 10.0))).sqrt();
    b.iter_mut().for_each(|v| *v *= gain);
    let mixture = p.iter().zip(&b).map(|(x, y)| x + y).collect();
    Ok(MixResult {
        mixture: Waveform::new(mixture, rate)?,
        primary: Waveform::new(p, rate)?,
        background: Waveform::new(b, rate)?,
        snr_db,
        offset,
        gain,
    })
}

/// Inserts a background speaker: pads the background with `pad_secs` of
/// silence on both sides, takes a looping excerpt from a random offset,
/// reverberates both signals and scales the background to a random SNR
/// measured after reverberation over the full primary length.
pub fn mix_background_speaker(
    primary: &Waveform,
    background: &Waveform,
    rir_p: &Waveform,
    rir_b: &Waveform,
    cfg: &MixConfig,
) -> Result<MixResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pad = (cfg.pad_secs * primary.sample_rate as f64).round() as usize;
    let padded_len = background.len() + 2 * pad;
    if padded_len == 0 {
        return Err(Error::Silent("background"));
    }
    let offset = rng.random_range(0..padded_len);
    let [lo, hi] = cfg.snr_db_range;
    let snr_db = if lo == hi { lo } else { rng.random_range(lo..hi) };
    mix_at(primary, background, rir_p, rir_b, pad, offset, snr_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excerpt_pads_and_loops() {
        let b = [1.0, 2.0, 3.0];
        assert_eq!(background_excerpt(&b, 2, 0, 7), vec![0.0, 0.0, 1.0, 2.0, 3.0, 0.0, 0.0]);
        assert_eq!(background_excerpt(&b, 2, 5, 5), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(background_excerpt(&b, 0, 1, 7), vec![2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0]);
    }

    #[test]
    fn silent_inputs_rejected() {
        let one = Waveform::new(vec![1.0], 16_000).unwrap();
        let z = Waveform::zeros(100, 16_000);
        let x = Waveform::new(vec![0.5; 100], 16_000).unwrap();
        assert!(matches!(mix_at(&z, &x, &one, &one, 0, 0, 5.0), Err(Error::Silent("primary"))));
        assert!(matches!(mix_at(&x, &z, &one, &one, 0, 0, 5.0), Err(Error::Silent("background"))));
    }

    #[test]
    fn config_checked() {
        let cfg = MixConfig {
            snr_db_range: [12.0, 5.0],
            ..MixConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
