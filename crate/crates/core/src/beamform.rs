//! Mask-based spatial covariance estimation and beamforming.
//!
//! Covers the Souden MVDR used by the baseline chain, reference channel
//! choice, the convolutional weighted multichannel Wiener filter with its
//! blind analytic normalisation, the mask post-filter and the mask path
//! driven by external per-channel speech estimates.

use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::audio::{Spectrogram, Waveform};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitize, load_diagonal, solve_hermitian, trace_re, unit, CMatrix, CVector, DIAGONAL_LOADING};

/// Scale of the identity used where a bin has no mask mass.
pub const SCM_FALLBACK: f64 = 1e-10;

const TINY: f64 = 1e-12;

/// Per-bin Hermitian spatial covariance matrices.
#[derive(Debug, Clone)]
pub struct SpatialCovariance {
    pub phi: Vec<CMatrix>,
    /// Sum of mask weights per bin.
    pub mass: Vec<f64>,
    /// Bins that fell back to `SCM_FALLBACK * I`.
    pub fallback_bins: Vec<usize>,
}

impl SpatialCovariance {
    pub fn dim(&self) -> usize {
        self.phi.first().map_or(0, |m| m.nrows())
    }

    pub fn num_bins(&self) -> usize {
        self.phi.len()
    }
}

/// Per-bin weight vectors of dimension `channels * taps`; tap `l` occupies
/// entries `l*channels .. (l+1)*channels`.
#[derive(Debug, Clone)]
pub struct BeamformerWeights {
    pub w: Vec<CVector>,
    pub ref_channel: usize,
    pub taps: usize,
    pub fallback_bins: Vec<usize>,
}

impl BeamformerWeights {
    pub fn dim(&self) -> usize {
        self.w.first().map_or(0, |v| v.len())
    }

    pub fn channels(&self) -> usize {
        self.dim() / self.taps.max(1)
    }
}

#[derive(Debug, Clone)]
pub struct SteeringVector {
    /// Unit norm per bin, reference entry real and non-negative.
    pub d: Vec<CVector>,
    pub ref_channel: usize,
    pub fallback_bins: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BanGain {
    pub gain: Vec<f64>,
    pub fallback_bins: Vec<usize>,
}

fn check_mask(s: &Spectrogram, mask: ArrayView2<f64>) -> Result<()> {
    if mask.dim() != (s.num_frames(), s.num_bins()) {
        return Err(Error::shape(format!(
            "mask is {:?}, spectrogram frames x bins is {:?}",
            mask.dim(),
            (s.num_frames(), s.num_bins())
        )));
    }
    if mask.iter().any(|&m| !(-1e-9..=1.0 + 1e-9).contains(&m)) {
        return Err(Error::invalid("mask values must lie in [0, 1]"));
    }
    Ok(())
}

/// `phi(f) = sum_t m x x^H / max(sum_t m, 1e-10)`, Hermitian-symmetrised.
pub fn scm_from_mask(s: &Spectrogram, mask: ArrayView2<f64>) -> Result<SpatialCovariance> {
    check_mask(s, mask)?;
    let dim = s.num_channels();
    let per_bin: Vec<(CMatrix, f64)> = (0..s.num_bins())
        .into_par_iter()
        .map(|f| {
            let x = s.bin_matrix(f);
            let mut acc = CMatrix::zeros(dim, dim);
            let mut mass = 0.0;
            for (t, row) in x.outer_iter().enumerate() {
                let m = mask[[t, f]];
                if m == 0.0 {
                    continue;
                }
                mass += m;
                for j in 0..dim {
                    let xj = row[j].conj() * m;
                    for i in 0..dim {
                        acc[(i, j)] += row[i] * xj;
                    }
                }
            }
            (hermitize(&(acc * c(1.0 / mass.max(1e-10)))), mass)
        })
        .collect();
    let mut out = SpatialCovariance {
        phi: Vec::with_capacity(per_bin.len()),
        mass: Vec::with_capacity(per_bin.len()),
        fallback_bins: Vec::new(),
    };
    for (f, (phi, mass)) in per_bin.into_iter().enumerate() {
        if mass <= 0.0 {
            out.fallback_bins.push(f);
            out.phi.push(CMatrix::identity(dim, dim) * c(SCM_FALLBACK));
        } else {
            out.phi.push(phi);
        }
        out.mass.push(mass);
    }
    Ok(out)
}

fn check_pair(phi_s: &SpatialCovariance, phi_n: &SpatialCovariance) -> Result<()> {
    if phi_s.num_bins() != phi_n.num_bins() || phi_s.dim() != phi_n.dim() {
        return Err(Error::shape("speech and noise covariances differ in shape"));
    }
    Ok(())
}

/// `phi_n^-1 phi_s` per bin with trace-relative loading on `phi_n`.
fn noise_whitened(phi_s: &SpatialCovariance, phi_n: &SpatialCovariance) -> Vec<Option<CMatrix>> {
    phi_s
        .phi
        .par_iter()
        .zip(phi_n.phi.par_iter())
        .map(|(s, n)| solve_hermitian(&load_diagonal(n, DIAGONAL_LOADING), s))
        .collect()
}

fn souden_column(num: &Option<CMatrix>, reference: usize, dim: usize) -> Option<CVector> {
    let num = num.as_ref()?;
    let tr: Complex64 = num.diagonal().iter().sum();
    if tr.norm() < TINY || !tr.re.is_finite() {
        return None;
    }
    Some(num.column(reference).into_owned() / tr).filter(|w| w.len() == dim)
}

/// Souden MVDR: `w = phi_n^-1 phi_s e_ref / tr(phi_n^-1 phi_s)`. Bins with
/// no speech energy fall back to `e_ref` and are flagged.
pub fn mvdr_souden(
    phi_s: &SpatialCovariance,
    phi_n: &SpatialCovariance,
    reference: usize,
) -> Result<BeamformerWeights> {
    check_pair(phi_s, phi_n)?;
    let dim = phi_s.dim();
    if reference >= dim {
        return Err(Error::invalid(format!("reference channel {reference} >= {dim}")));
    }
    let num = noise_whitened(phi_s, phi_n);
    let mut fallback_bins = Vec::new();
    let w = num
        .iter()
        .enumerate()
        .map(|(f, n)| {
            souden_column(n, reference, dim).unwrap_or_else(|| {
                fallback_bins.push(f);
                unit(dim, reference)
            })
        })
        .collect();
    Ok(BeamformerWeights {
        w,
        ref_channel: reference,
        taps: 1,
        fallback_bins,
    })
}

fn quad(w: &CVector, m: &CMatrix) -> f64 {
    (w.adjoint() * m * w)[(0, 0)].re
}

/// Channel maximising `sum_f (w_i^H phi_s w_i) / (w_i^H phi_n w_i)` over the
/// MVDR filters referenced to each channel; ties go to the lowest index.
pub fn select_reference_channel(phi_s: &SpatialCovariance, phi_n: &SpatialCovariance) -> Result<usize> {
    check_pair(phi_s, phi_n)?;
    let dim = phi_s.dim();
    if dim <= 1 {
        return Ok(0);
    }
    let num = noise_whitened(phi_s, phi_n);
    let scores: Vec<f64> = (0..dim)
        .map(|i| {
            num.iter()
                .enumerate()
                .filter_map(|(f, n)| {
                    let w = souden_column(n, i, dim)?;
                    let den = quad(&w, &phi_n.phi[f]);
                    (den > TINY).then(|| quad(&w, &phi_s.phi[f]) / den)
                })
                .sum()
        })
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] * (1.0 + 1e-12) + 1e-300 {
            best = i;
        }
    }
    Ok(best)
}

/// Tap-stacked observations `[x(t); x(t-1); ...; x(t-L+1)]`, zero before
/// the first frame; channel `l*I + i` holds channel `i` delayed by `l`.
pub fn stack_taps(s: &Spectrogram, taps: usize) -> Result<Spectrogram> {
    if taps == 0 {
        return Err(Error::invalid("taps must be >= 1"));
    }
    let (ch, frames, bins) = s.data.dim();
    let mut data = Array3::zeros((ch * taps, frames, bins));
    for l in 0..taps {
        for i in 0..ch {
            for t in l..frames {
                for f in 0..bins {
                    data[[l * ch + i, t, f]] = s.data[[i, t - l, f]];
                }
            }
        }
    }
    Ok(s.with_data(data))
}

/// `y(t,f) = w(f)^H x(t,f)`, stacking taps first when the filter is
/// convolutional. `s` carries the unstacked channels.
pub fn apply_beamformer(wts: &BeamformerWeights, s: &Spectrogram) -> Result<Spectrogram> {
    if wts.w.len() != s.num_bins() {
        return Err(Error::shape(format!(
            "{} weight bins for {} spectrogram bins",
            wts.w.len(),
            s.num_bins()
        )));
    }
    if s.num_channels() * wts.taps != wts.dim() {
        return Err(Error::shape(format!(
            "weights of dimension {} cannot consume {} channels x {} taps",
            wts.dim(),
            s.num_channels(),
            wts.taps
        )));
    }
    let stacked;
    let x = if wts.taps > 1 {
        stacked = stack_taps(s, wts.taps)?;
        &stacked
    } else {
        s
    };
    let (frames, bins) = (x.num_frames(), x.num_bins());
    let mut out = Array3::zeros((1, frames, bins));
    for f in 0..bins {
        let w = &wts.w[f];
        for t in 0..frames {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, wi) in w.iter().enumerate() {
                acc += wi.conj() * x.data[[i, t, f]];
            }
            out[[0, t, f]] = acc;
        }
    }
    Ok(s.with_data(out))
}

/// Blind analytic normalisation gain
/// `g = sqrt(w^H phi phi w / (I L)) / (w^H phi w)`; works unchanged for
/// convolutional filters with a tap-stacked noise covariance.
pub fn ban_gain(wts: &BeamformerWeights, phi_n: &SpatialCovariance) -> Result<BanGain> {
    if wts.w.len() != phi_n.num_bins() || wts.dim() != phi_n.dim() {
        return Err(Error::shape("weights and noise covariance differ in shape"));
    }
    let dim = wts.dim() as f64;
    let mut fallback_bins = Vec::new();
    let gain = wts
        .w
        .iter()
        .zip(&phi_n.phi)
        .enumerate()
        .map(|(f, (w, phi))| {
            let pw = phi * w;
            let den = (w.adjoint() * &pw)[(0, 0)].re;
            let num = pw.norm_squared() / dim;
            if den.abs() < TINY {
                fallback_bins.push(f);
                1.0
            } else {
                num.sqrt() / den
            }
        })
        .collect();
    Ok(BanGain { gain, fallback_bins })
}

/// Scales each bin of a single-channel spectrogram by its gain.
pub fn apply_gain(y: &Spectrogram, gain: &BanGain) -> Result<Spectrogram> {
    if gain.gain.len() != y.num_bins() {
        return Err(Error::shape("gain and spectrogram bins differ"));
    }
    let mut out = y.clone();
    for ((_, _, f), v) in out.data.indexed_iter_mut() {
        *v *= gain.gain[f];
    }
    Ok(out)
}

/// Principal eigenvector of the rank-one covariance `r r^H` with
/// `r(f) = sum_t x(t,f) conj(y(t,f))`, i.e. `r / |r|`, phase-referenced to
/// `reference`.
pub fn steering_from_beamformed(
    x: &Spectrogram,
    y: &Spectrogram,
    reference: usize,
) -> Result<SteeringVector> {
    if y.num_channels() != 1 || y.num_frames() != x.num_frames() || y.num_bins() != x.num_bins() {
        return Err(Error::shape("beamformer output must be single-channel and frame-aligned"));
    }
    let dim = x.num_channels();
    if reference >= dim {
        return Err(Error::invalid(format!("reference channel {reference} >= {dim}")));
    }
    let mut fallback_bins = Vec::new();
    let d = (0..x.num_bins())
        .map(|f| {
            let mut r = CVector::zeros(dim);
            for t in 0..x.num_frames() {
                let yc = y.data[[0, t, f]].conj();
                for i in 0..dim {
                    r[i] += x.data[[i, t, f]] * yc;
                }
            }
            let norm = r.norm();
            if norm < TINY {
                fallback_bins.push(f);
                return unit(dim, reference);
            }
            let mut d = r / c(norm);
            let anchor = d[reference];
            if anchor.norm() > 0.0 {
                d *= anchor.conj() / anchor.norm();
            }
            d
        })
        .collect();
    Ok(SteeringVector {
        d,
        ref_channel: reference,
        fallback_bins,
    })
}

/// Time average of `|y|^2` per bin over `frames`.
pub fn output_psd(y: &Spectrogram, frames: std::ops::Range<usize>) -> Vec<f64> {
    let n = frames.len().max(1) as f64;
    (0..y.num_bins())
        .map(|f| frames.clone().map(|t| y.data[[0, t, f]].norm_sqr()).sum::<f64>() / n)
        .collect()
}

/// Rank-one speech model multichannel Wiener filter over tap-stacked
/// observations: `w = phi_s N^-1 d_bar / (1 + phi_s d_bar^H N^-1 d_bar)`
/// with `d_bar = [d; 0; ...; 0]`.
pub fn cwmwf(
    d: &SteeringVector,
    phi_n_conv: &SpatialCovariance,
    taps: usize,
    phi_s_psd: &[f64],
) -> Result<BeamformerWeights> {
    if taps == 0 {
        return Err(Error::invalid("taps must be >= 1"));
    }
    let channels = d.d.first().map_or(0, |v| v.len());
    let dim = channels * taps;
    if phi_n_conv.dim() != dim || phi_n_conv.num_bins() != d.d.len() || phi_s_psd.len() != d.d.len() {
        return Err(Error::shape(format!(
            "convolutional noise covariance must be {dim}x{dim} over {} bins",
            d.d.len()
        )));
    }
    let mut fallback_bins = Vec::new();
    let mut w = Vec::with_capacity(d.d.len());
    for (f, (dv, phi)) in d.d.iter().zip(&phi_n_conv.phi).enumerate() {
        let mut d_bar = CMatrix::zeros(dim, 1);
        for i in 0..channels {
            d_bar[(i, 0)] = dv[i];
        }
        let u = match solve_hermitian(&load_diagonal(phi, DIAGONAL_LOADING), &d_bar) {
            Some(u) => u,
            None => {
                fallback_bins.push(f);
                let mut loaded = load_diagonal(phi, 1e-3);
                if trace_re(phi) <= 0.0 {
                    loaded += CMatrix::identity(dim, dim) * c(SCM_FALLBACK);
                }
                solve_hermitian(&loaded, &d_bar).ok_or(Error::Singular { bin: f })?
            }
        };
        let ps = phi_s_psd[f];
        let gain = (d_bar.adjoint() * &u)[(0, 0)].re;
        w.push(u.column(0).into_owned() * c(ps / (1.0 + ps * gain)));
    }
    Ok(BeamformerWeights {
        w,
        ref_channel: d.ref_channel,
        taps,
        fallback_bins,
    })
}

/// Element-wise `m * y`, no flooring.
pub fn mask_postfilter(y: &Spectrogram, m: ArrayView2<f64>) -> Result<Spectrogram> {
    if y.num_channels() != 1 || m.dim() != (y.num_frames(), y.num_bins()) {
        return Err(Error::shape("post-filter mask must match the single-channel output"));
    }
    let mut out = y.clone();
    for ((_, t, f), v) in out.data.indexed_iter_mut() {
        *v *= m[[t, f]];
    }
    Ok(out)
}

/// Scales the waveform down to unit peak when it would clip.
pub fn peak_normalize(w: &Waveform) -> Waveform {
    let peak = w.peak();
    if peak > 1.0 {
        Waveform {
            samples: w.samples.iter().map(|s| s / peak).collect(),
            sample_rate: w.sample_rate,
        }
    } else {
        w.clone()
    }
}

/// Speech and noise masks from per-channel speech estimates: the noise is
/// the residual `X - S`, the speech mask `|S|^2 / (|S|^2 + |N|^2 + 1e-10)`
/// averaged over channels, the noise mask its complement.
pub fn masks_from_speech_estimates(mix: &Spectrogram, est: &Spectrogram) -> Result<(Array2<f64>, Array2<f64>)> {
    if mix.data.dim() != est.data.dim() {
        return Err(Error::shape(format!(
            "estimate {:?} differs from mixture {:?}",
            est.data.dim(),
            mix.data.dim()
        )));
    }
    let (ch, frames, bins) = mix.data.dim();
    let mut speech = Array2::zeros((frames, bins));
    for i in 0..ch {
        for t in 0..frames {
            for f in 0..bins {
                let s = est.data[[i, t, f]];
                let n = mix.data[[i, t, f]] - s;
                let ps = s.norm_sqr();
                speech[[t, f]] += ps / (ps + n.norm_sqr() + 1e-10);
            }
        }
    }
    speech.mapv_inplace(|v: f64| v / ch as f64);
    let noise = speech.mapv(|v| 1.0 - v);
    Ok((speech, noise))
}

/// Result of mask-based MVDR.
#[derive(Debug, Clone)]
pub struct MvdrOutput {
    pub output: Spectrogram,
    pub weights: BeamformerWeights,
    pub phi_s: SpatialCovariance,
    pub phi_n: SpatialCovariance,
}

/// SCMs from the masks, reference selection, Souden MVDR and filtering.
pub fn mask_based_mvdr(s: &Spectrogram, speech: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<MvdrOutput> {
    let phi_s = scm_from_mask(s, speech)?;
    let phi_n = scm_from_mask(s, noise)?;
    let reference = select_reference_channel(&phi_s, &phi_n)?;
    let weights = mvdr_souden(&phi_s, &phi_n, reference)?;
    let output = apply_beamformer(&weights, s)?;
    Ok(MvdrOutput {
        output,
        weights,
        phi_s,
        phi_n,
    })
}

/// Beamforms `mix` with masks derived from external speech estimates.
pub fn mvdr_from_speech_estimates(mix: &Spectrogram, est: &Spectrogram) -> Result<MvdrOutput> {
    let (speech, noise) = masks_from_speech_estimates(mix, est)?;
    mask_based_mvdr(mix, speech.view(), noise.view())
}
