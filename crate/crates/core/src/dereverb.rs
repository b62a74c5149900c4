//! Weighted prediction error (WPE) dereverberation in the STFT domain.
//!
//! Every frequency bin is an independent multichannel linear-prediction
//! problem: the late reverberation at frame `t` is predicted from the
//! frames `t-delay .. t-delay-taps+1` and subtracted, with the prediction
//! error weighted by the inverse of the current power estimate.

use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::Spectrogram;
use crate::error::{Error, Result};
use crate::linalg::{c, solve_hermitian, CMatrix, DIAGONAL_LOADING};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpeConfig {
    pub taps: usize,
    pub delay: usize,
    pub iterations: usize,
    pub psd_floor: f64,
}

impl Default for WpeConfig {
    fn default() -> Self {
        Self {
            taps: 10,
            delay: 2,
            iterations: 3,
            psd_floor: 1e-10,
        }
    }
}

impl WpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.delay == 0 || self.iterations == 0 {
            return Err(Error::invalid("WPE taps, delay and iterations must be >= 1"));
        }
        if !(self.psd_floor > 0.0) {
            return Err(Error::invalid("WPE psd_floor must be positive"));
        }
        Ok(())
    }
}

/// Result of dereverberating one frequency bin.
#[derive(Debug, Clone)]
pub struct WpeBin {
    /// Dereverberated observations, `(frame, channel)`.
    pub output: Array2<Complex64>,
    /// Prediction filter `G`, `(channels * taps) x channels`.
    pub filter: CMatrix,
    /// Power weights used to estimate `filter` in the last iteration.
    pub lambda: Vec<f64>,
}

/// Stacked delayed history `[x(t-d); x(t-d-1); ...]`, zero before frame 0.
pub fn history(x: ArrayView2<Complex64>, t: usize, delay: usize, taps: usize, out: &mut [Complex64]) {
    let channels = x.ncols();
    for k in 0..taps {
        let lag = delay + k;
        for i in 0..channels {
            out[k * channels + i] = if t >= lag {
                x[[t - lag, i]]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
}

/// WPE on a single bin; `x` is `(frame, channel)`.
pub fn wpe_bin(x: ArrayView2<Complex64>, cfg: &WpeConfig, bin: usize) -> Result<WpeBin> {
    cfg.validate()?;
    let (frames, channels) = x.dim();
    let needed = cfg.taps + cfg.delay + 1;
    if frames < needed {
        return Err(Error::TooShort {
            len: frames,
            needed,
        });
    }
    let dim = channels * cfg.taps;
    let mut out = x.to_owned();
    let mut filter = CMatrix::zeros(dim, channels);
    let mut lambda = vec![cfg.psd_floor; frames];
    let mut h = vec![Complex64::new(0.0, 0.0); dim];

    for _ in 0..cfg.iterations {
        for (t, l) in lambda.iter_mut().enumerate() {
            let p = out.row(t).iter().map(|v| v.norm_sqr()).sum::<f64>() / channels as f64;
            *l = p.max(cfg.psd_floor);
        }

        // upper triangle of R, column-major
        let mut r = vec![Complex64::new(0.0, 0.0); dim * dim];
        let mut p = CMatrix::zeros(dim, channels);
        for t in 0..frames {
            history(x, t, cfg.delay, cfg.taps, &mut h);
            let inv = 1.0 / lambda[t];
            for b in 0..dim {
                let hb = h[b].conj() * inv;
                if hb == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let col = &mut r[b * dim..b * dim + b + 1];
                for (a, rv) in col.iter_mut().enumerate() {
                    *rv += h[a] * hb;
                }
            }
            for i in 0..channels {
                let xi = x[[t, i]].conj() * inv;
                for a in 0..dim {
                    p[(a, i)] += h[a] * xi;
                }
            }
        }
        let mut rm = CMatrix::zeros(dim, dim);
        for b in 0..dim {
            for a in 0..=b {
                let v = r[b * dim + a];
                rm[(a, b)] = v;
                rm[(b, a)] = v.conj();
            }
        }
        let trace: f64 = (0..dim).map(|a| rm[(a, a)].re).sum();
        if trace <= 0.0 {
            // nothing to predict from
            filter = CMatrix::zeros(dim, channels);
            out.assign(&x);
            break;
        }
        let load = DIAGONAL_LOADING * trace / dim as f64;
        for a in 0..dim {
            rm[(a, a)] += c(load);
        }
        filter = solve_hermitian(&rm, &p).ok_or(Error::Singular { bin })?;

        for t in 0..frames {
            history(x, t, cfg.delay, cfg.taps, &mut h);
            for i in 0..channels {
                let mut pred = Complex64::new(0.0, 0.0);
                for a in 0..dim {
                    pred += filter[(a, i)].conj() * h[a];
                }
                out[[t, i]] = x[[t, i]] - pred;
            }
        }
    }
    Ok(WpeBin {
        output: out,
        filter,
        lambda,
    })
}

/// Dereverberates every bin of `s` independently; output has the input's shape.
pub fn wpe(s: &Spectrogram, cfg: &WpeConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let needed = cfg.taps + cfg.delay + 1;
    if s.num_frames() < needed {
        return Err(Error::TooShort {
            len: s.num_frames(),
            needed,
        });
    }
    let bins: Vec<Array2<Complex64>> = (0..s.num_bins())
        .into_par_iter()
        .map(|f| wpe_bin(s.bin_matrix(f).view(), cfg, f).map(|b| b.output))
        .collect::<Result<_>>()?;
    let mut data = Array3::zeros(s.data.dim());
    for (f, b) in bins.into_iter().enumerate() {
        for ((t, i), v) in b.indexed_iter() {
            data[[i, t, f]] = *v;
        }
    }
    Ok(s.with_data(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::StftConfig;

    #[test]
    fn zero_input_gives_zero_output() {
        let cfg = StftConfig::default();
        let s = Spectrogram::new(Array3::zeros((2, 40, 513)), cfg, 16_000).unwrap();
        let y = wpe(&s, &WpeConfig::default()).unwrap();
        assert!(y.data.iter().all(|v| v.norm() == 0.0));
        assert_eq!(y.data.dim(), s.data.dim());
    }

    #[test]
    fn too_short_input_rejected() {
        let s = Spectrogram::new(Array3::zeros((1, 12, 513)), StftConfig::default(), 16_000).unwrap();
        assert!(matches!(
            wpe(&s, &WpeConfig::default()),
            Err(Error::TooShort { needed: 13, .. })
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = WpeConfig {
            delay: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
