//! Guided complex angular central Gaussian mixture model (cACGMM).
//!
//! Observations are the unit-normalised multichannel STFT vectors
//! `z(t,f) = x(t,f)/|x(t,f)|`. Each class has one shape matrix `B` per
//! frequency and one mixture weight per frame; the weights carry no
//! frequency axis, which ties the classes across bins and resolves the
//! permutation problem. Oracle activity zeroes the prior of every class
//! that is silent in a frame.

use ndarray::{Array2, Array3, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::Spectrogram;
use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix};
use crate::manifest::ActivityGrid;

/// Norm below which an observation carries no direction.
const SILENT_NORM: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacgmmConfig {
    pub iterations: usize,
    pub eps: f64,
    pub weight_floor: f64,
}

impl Default for CacgmmConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            eps: 1e-10,
            weight_floor: 1e-6,
        }
    }
}

impl CacgmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("CACGMM needs at least one iteration"));
        }
        if !(self.eps > 0.0) || !(self.weight_floor >= 0.0) {
            return Err(Error::invalid("CACGMM eps must be > 0 and weight_floor >= 0"));
        }
        Ok(())
    }
}

/// Class posteriors `gamma[(class, frame, bin)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    pub gamma: Array3<f64>,
    /// Class labels: speakers followed by the noise class.
    pub classes: Vec<String>,
    pub target_index: usize,
}

impl Masks {
    pub fn target(&self) -> Array2<f64> {
        self.gamma.index_axis(ndarray::Axis(0), self.target_index).to_owned()
    }

    /// Everything but the target: `1 - gamma_target`.
    pub fn undesired(&self) -> Array2<f64> {
        self.target().mapv(|g| (1.0 - g).max(0.0))
    }
}

#[derive(Debug, Clone)]
pub struct CacgParams {
    /// `b[f][k]`: shape matrix of class `k` at bin `f`.
    pub b: Vec<Vec<CMatrix>>,
    /// `(class, frame)` mixture weights.
    pub pi: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct CacgmmFit {
    /// `(class, frame, bin)`.
    pub gamma: Array3<f64>,
    pub params: CacgParams,
    /// Log-likelihood `sum_{t,f} log sum_k a_k pi_k p_k` after every E-step,
    /// starting with the initial parameters (`iterations + 1` values).
    pub objective: Vec<f64>,
}

/// Normaliser of the cACG density on the complex unit sphere in `C^dim`.
fn log_normalizer(dim: usize) -> f64 {
    let log_fact: f64 = (1..dim).map(|k| (k as f64).ln()).sum();
    log_fact - std::f64::consts::LN_2 - dim as f64 * std::f64::consts::PI.ln()
}

struct Factor {
    l: CMatrix,
    log_det: f64,
}

fn factor(b: &CMatrix) -> Result<Factor> {
    let scale = b.norm().max(1e-300);
    if (b - b.adjoint()).norm() > 1e-10 * scale {
        return Err(Error::NotPositiveDefinite);
    }
    let ch = b.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = ch.unpack();
    // Complex Cholesky happily takes square roots of negative pivots.
    if l.diagonal().iter().any(|d| !(d.re > 0.0) || d.im.abs() > 1e-12 * d.re) {
        return Err(Error::NotPositiveDefinite);
    }
    let log_det = 2.0 * l.diagonal().iter().map(|d| d.re.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(Factor { l, log_det })
}

/// `z^H B^{-1} z = |L^{-1} z|^2` by forward substitution.
fn quad_form(l: &CMatrix, z: &[Complex64], work: &mut [Complex64]) -> f64 {
    let n = z.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut v = z[i];
        for j in 0..i {
            v -= l[(i, j)] * work[j];
        }
        v /= l[(i, i)];
        work[i] = v;
        acc += v.norm_sqr();
    }
    acc
}

/// Log density of a unit vector `z` under a cACG with shape `b`:
/// `-log det B - I log(z^H B^-1 z)` plus the shared normaliser.
pub fn cacg_log_density(z: &[Complex64], b: &CMatrix) -> Result<f64> {
    if b.nrows() != z.len() || b.ncols() != z.len() {
        return Err(Error::shape("z and B dimensions differ"));
    }
    let f = factor(b)?;
    let mut work = vec![Complex64::new(0.0, 0.0); z.len()];
    let q = quad_form(&f.l, z, &mut work);
    Ok(-f.log_det - z.len() as f64 * q.ln() + log_normalizer(z.len()))
}

/// Unit-normalised observations `(frame, channel)` for one bin, plus a
/// silence flag per frame.
fn normalized_bin(x: ArrayView2<Complex64>) -> (Array2<Complex64>, Vec<bool>) {
    let mut z = x.to_owned();
    let mut silent = vec![false; z.nrows()];
    for (t, mut row) in z.outer_iter_mut().enumerate() {
        let norm = row.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm < SILENT_NORM {
            silent[t] = true;
            row.fill(Complex64::new(0.0, 0.0));
        } else {
            row.mapv_inplace(|v| v / norm);
        }
    }
    (z, silent)
}

struct BinPosterior {
    /// `(class, frame)`.
    gamma: Array2<f64>,
    /// `z^H B_k^{-1} z` under the parameters used for `gamma`.
    quad: Array2<f64>,
    log_lik: f64,
}

fn e_step(
    z: &Array2<Complex64>,
    silent: &[bool],
    b: &[CMatrix],
    prior: &Array2<f64>,
) -> Result<BinPosterior> {
    let (frames, dim) = z.dim();
    let classes = b.len();
    let norm = log_normalizer(dim);
    let mut log_p = Array2::zeros((classes, frames));
    let mut quad = Array2::from_elem((classes, frames), 1.0);
    let mut work = vec![Complex64::new(0.0, 0.0); dim];
    for (k, bk) in b.iter().enumerate() {
        let f = factor(bk)?;
        for t in 0..frames {
            if silent[t] {
                continue;
            }
            let q = quad_form(&f.l, z.row(t).as_slice().expect("row-major"), &mut work).max(1e-300);
            quad[[k, t]] = q;
            log_p[[k, t]] = -f.log_det - dim as f64 * q.ln() + norm;
        }
    }
    let mut gamma = Array2::zeros((classes, frames));
    let mut log_lik = 0.0;
    for t in 0..frames {
        let peak = (0..classes)
            .filter(|&k| prior[[k, t]] > 0.0)
            .map(|k| log_p[[k, t]])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for k in 0..classes {
            let p = prior[[k, t]];
            if p > 0.0 {
                let v = p * (log_p[[k, t]] - peak).exp();
                gamma[[k, t]] = v;
                total += v;
            }
        }
        for k in 0..classes {
            gamma[[k, t]] /= total;
        }
        log_lik += peak + total.ln();
    }
    Ok(BinPosterior {
        gamma,
        quad,
        log_lik,
    })
}

fn m_step(z: &Array2<Complex64>, silent: &[bool], post: &BinPosterior, eps: f64) -> Vec<CMatrix> {
    let (frames, dim) = z.dim();
    (0..post.gamma.nrows())
        .map(|k| {
            let mut acc = CMatrix::zeros(dim, dim);
            let mut mass = 0.0;
            for t in 0..frames {
                let g = post.gamma[[k, t]];
                if silent[t] || g == 0.0 {
                    continue;
                }
                mass += g;
                let w = g / post.quad[[k, t]];
                let zt = z.row(t);
                for j in 0..dim {
                    let zj = zt[j].conj() * w;
                    for i in 0..dim {
                        acc[(i, j)] += zt[i] * zj;
                    }
                }
            }
            let mut b = if mass > 0.0 {
                acc * c(dim as f64 / mass)
            } else {
                CMatrix::identity(dim, dim)
            };
            b = (&b + b.adjoint()) * c(0.5);
            let load = eps * b.diagonal().iter().map(|d| d.re).sum::<f64>() / dim as f64;
            for i in 0..dim {
                b[(i, i)] += c(load);
            }
            b
        })
        .collect()
}

/// EM fit with one class per row of `activity` (`(class, frame)`).
/// Rows must include an always-active class if every frame should have
/// support.
pub fn fit_cacgmm(s: &Spectrogram, activity: ArrayView2<bool>, cfg: &CacgmmConfig) -> Result<CacgmmFit> {
    cfg.validate()?;
    let (classes, frames) = activity.dim();
    let dim = s.num_channels();
    let bins = s.num_bins();
    if frames != s.num_frames() {
        return Err(Error::shape(format!(
            "activity has {frames} frames, spectrogram {}",
            s.num_frames()
        )));
    }
    if frames < 2 {
        return Err(Error::TooShort { len: frames, needed: 2 });
    }
    if classes == 0 {
        return Err(Error::invalid("at least one class is required"));
    }
    if let Some(t) = (0..frames).find(|&t| !activity.column(t).iter().any(|&a| a)) {
        return Err(Error::invalid(format!("no class is active in frame {t}")));
    }

    let act = activity.mapv(|a| if a { 1.0 } else { 0.0 });
    let mut pi = act.clone();
    for mut col in pi.columns_mut() {
        let sum = col.sum();
        col.mapv_inplace(|v| v / sum);
    }

    let obs: Vec<(Array2<Complex64>, Vec<bool>)> = (0..bins)
        .into_par_iter()
        .map(|f| normalized_bin(s.bin_matrix(f).view()))
        .collect();
    let mut b: Vec<Vec<CMatrix>> = vec![vec![CMatrix::identity(dim, dim); classes]; bins];
    let mut objective = Vec::with_capacity(cfg.iterations + 1);

    let mut posts = e_step_all(&obs, &b, &pi)?;
    objective.push(posts.iter().map(|p| p.log_lik).sum());
    for _ in 0..cfg.iterations {
        // tied weights: one cross-frequency reduction per iteration
        let mut new_pi = Array2::<f64>::zeros((classes, frames));
        for p in &posts {
            new_pi += &p.gamma;
        }
        for k in 0..classes {
            for t in 0..frames {
                new_pi[[k, t]] = new_pi[[k, t]].max(cfg.weight_floor) * act[[k, t]];
            }
        }
        for mut col in new_pi.columns_mut() {
            let sum = col.sum();
            col.mapv_inplace(|v| v / sum);
        }
        pi = new_pi;
        b = obs
            .par_iter()
            .zip(posts.par_iter())
            .map(|((z, silent), post)| m_step(z, silent, post, cfg.eps))
            .collect();
        posts = e_step_all(&obs, &b, &pi)?;
        objective.push(posts.iter().map(|p| p.log_lik).sum());
    }

    let mut gamma = Array3::zeros((classes, frames, bins));
    for (f, p) in posts.iter().enumerate() {
        for ((k, t), g) in p.gamma.indexed_iter() {
            gamma[[k, t, f]] = *g;
        }
    }
    Ok(CacgmmFit {
        gamma,
        params: CacgParams { b, pi },
        objective,
    })
}

fn e_step_all(
    obs: &[(Array2<Complex64>, Vec<bool>)],
    b: &[Vec<CMatrix>],
    pi: &Array2<f64>,
) -> Result<Vec<BinPosterior>> {
    obs.par_iter()
        .zip(b.par_iter())
        .map(|((z, silent), bf)| e_step(z, silent, bf, pi))
        .collect()
}

/// Guided fit: one class per speaker in `grid` plus an always-active noise
/// class; returns the posteriors with `target_speaker`'s class marked.
pub fn fit_guided_cacgmm(
    s: &Spectrogram,
    grid: &ActivityGrid,
    target_speaker: &str,
    cfg: &CacgmmConfig,
) -> Result<Masks> {
    if s.num_channels() < 2 {
        return Err(Error::invalid("guided CACGMM needs at least two channels"));
    }
    let target_index = grid
        .speaker_index(target_speaker)
        .ok_or_else(|| Error::TargetInactive(target_speaker.to_string()))?;
    if !grid.activity.row(target_index).iter().any(|&a| a) {
        return Err(Error::TargetInactive(target_speaker.to_string()));
    }
    let activity = with_noise_class(grid);
    let fit = fit_cacgmm(s, activity.view(), cfg)?;
    let mut classes = grid.speakers.clone();
    classes.push("<noise>".into());
    Ok(Masks {
        gamma: fit.gamma,
        classes,
        target_index,
    })
}

/// Speaker activity with an always-active noise row appended.
pub fn with_noise_class(grid: &ActivityGrid) -> Array2<bool> {
    let (speakers, frames) = grid.activity.dim();
    let mut a = Array2::from_elem((speakers + 1, frames), true);
    a.slice_mut(ndarray::s![..speakers, ..]).assign(&grid.activity);
    a
}
