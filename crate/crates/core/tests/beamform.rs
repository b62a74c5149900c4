mod common;

use common::*;
use farfield_core::audio::{Spectrogram, StftConfig};
use farfield_core::beamform::{
    apply_beamformer, ban_gain, mask_postfilter, masks_from_speech_estimates, mvdr_souden, scm_from_mask,
    steering_from_beamformed, BeamformerWeights, SpatialCovariance,
};
use farfield_core::linalg::{hermitian_eigenvalues, trace_re, CMatrix, CVector};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn config() -> StftConfig {
    StftConfig {
        window_length: 16,
        hop: 4,
        fft_size: 16,
        ..StftConfig::default()
    }
}

fn cn(r: &mut ChaCha8Rng) -> Complex64 {
    let v = gaussian(r, 2);
    Complex64::new(v[0], v[1])
}

fn random_spec(r: &mut ChaCha8Rng, channels: usize, frames: usize) -> Spectrogram {
    let cfg = config();
    let data = Array3::from_shape_fn((channels, frames, cfg.num_bins()), |_| cn(r));
    Spectrogram::new(data, cfg, FS).unwrap()
}

fn random_vector(r: &mut ChaCha8Rng, dim: usize) -> CVector {
    CVector::from_fn(dim, |_, _| cn(r))
}

/// `A A^H + I` for a random `A`.
fn random_pd(r: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    let a = CMatrix::from_fn(dim, dim, |_, _| cn(r));
    &a * a.adjoint() + CMatrix::identity(dim, dim)
}

fn single_bin(m: CMatrix) -> SpatialCovariance {
    SpatialCovariance {
        phi: vec![m],
        mass: vec![1.0],
        fallback_bins: Vec::new(),
    }
}

#[test]
fn scm_matches_brute_force_sum() {
    let mut r = rng(1);
    let s = random_spec(&mut r, 3, 50);
    let mask = Array2::from_shape_fn((50, s.num_bins()), |_| r.random_range(0.0..1.0));
    let scm = scm_from_mask(&s, mask.view()).unwrap();
    for f in 0..s.num_bins() {
        let mut acc = CMatrix::zeros(3, 3);
        let mut mass = 0.0;
        for t in 0..50 {
            let x = CVector::from_fn(3, |i, _| s.data[[i, t, f]]);
            acc += &x * x.adjoint() * Complex64::new(mask[[t, f]], 0.0);
            mass += mask[[t, f]];
        }
        acc /= Complex64::new(mass, 0.0);
        assert!((&scm.phi[f] - &acc).norm() <= 1e-10 * acc.norm());
        assert!((&scm.phi[f] - scm.phi[f].adjoint()).norm() <= 1e-10 * acc.norm());
        let min_eig = hermitian_eigenvalues(&scm.phi[f])[0];
        assert!(min_eig >= -1e-10 * trace_re(&scm.phi[f]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mvdr_is_distortionless(seed in any::<u64>(), dim in 2usize..6, scale in 0.01f64..100.0) {
        let mut r = rng(seed);
        let d = random_vector(&mut r, dim);
        let reference = r.random_range(0..dim);
        let phi_s = &d * d.adjoint() * Complex64::new(scale, 0.0);
        let phi_n = random_pd(&mut r, dim);
        let w = mvdr_souden(&single_bin(phi_s), &single_bin(phi_n.clone()), reference).unwrap();
        let rtf = &d / d[reference];
        let resp = (w.w[0].adjoint() * &rtf)[(0, 0)];
        prop_assert!((resp - Complex64::new(1.0, 0.0)).norm() <= 1e-6, "response {resp}");

        // scaling the noise covariance leaves the filter unchanged
        let w2 = mvdr_souden(
            &single_bin(&d * d.adjoint()),
            &single_bin(phi_n * Complex64::new(7.5, 0.0)),
            reference,
        )
        .unwrap();
        prop_assert!((&w2.w[0] - &w.w[0]).norm() <= 1e-8 * w.w[0].norm());
    }

    #[test]
    fn ban_gain_is_scale_free(seed in any::<u64>(), dim in 1usize..5, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let w = BeamformerWeights { w: vec![random_vector(&mut r, dim)], ref_channel: 0, taps: 1, fallback_bins: vec![] };
        let phi = random_pd(&mut r, dim);
        let g1 = ban_gain(&w, &single_bin(phi.clone())).unwrap().gain[0];
        let g2 = ban_gain(&w, &single_bin(phi * Complex64::new(c, 0.0))).unwrap().gain[0];
        prop_assert!((g1 - g2).abs() <= 1e-9 * g1);
    }

    #[test]
    fn postfilter_never_amplifies(seed in any::<u64>()) {
        let mut r = rng(seed);
        let y = random_spec(&mut r, 1, 20);
        let m = Array2::from_shape_fn((20, y.num_bins()), |_| r.random_range(0.0..=1.0));
        let out = mask_postfilter(&y, m.view()).unwrap();
        for (a, b) in out.data.iter().zip(&y.data) {
            prop_assert!(a.norm() <= b.norm());
        }
    }
}

#[test]
fn mvdr_beats_best_channel_in_isotropic_noise() {
    for trial in 0..10 {
        let mut r = rng(100 + trial);
        let (dim, frames) = (4, 400);
        let bins = config().num_bins();
        let mut speech = Array3::zeros((dim, frames, bins));
        let mut noise = Array3::zeros((dim, frames, bins));
        for f in 0..bins {
            let d = random_vector(&mut r, dim);
            for t in 0..frames {
                let s = cn(&mut r);
                for i in 0..dim {
                    speech[[i, t, f]] = d[i] * s;
                    noise[[i, t, f]] = cn(&mut r) * 0.7;
                }
            }
        }
        let cfg = config();
        let sp = Spectrogram::new(speech, cfg, FS).unwrap();
        let np = Spectrogram::new(noise, cfg, FS).unwrap();
        let ones = Array2::ones((frames, bins));
        let phi_s = scm_from_mask(&sp, ones.view()).unwrap();
        let phi_n = scm_from_mask(&np, ones.view()).unwrap();
        let w = mvdr_souden(&phi_s, &phi_n, 0).unwrap();
        let energy = |s: &Spectrogram| s.data.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let out_snr = energy(&apply_beamformer(&w, &sp).unwrap()) / energy(&apply_beamformer(&w, &np).unwrap());
        let best = (0..dim)
            .map(|i| energy(&sp.select_channels(&[i])) / energy(&np.select_channels(&[i])))
            .fold(0.0, f64::max);
        assert!(out_snr >= best, "trial {trial}: {out_snr} < {best}");
    }
}

#[test]
fn steering_survives_weak_noise() {
    let mut r = rng(7);
    let (dim, frames) = (4, 500);
    let cfg = config();
    let bins = cfg.num_bins();
    let d: Vec<CVector> = (0..bins).map(|_| random_vector(&mut r, dim).normalize()).collect();
    let mut x = Array3::zeros((dim, frames, bins));
    let mut y = Array3::zeros((1, frames, bins));
    for f in 0..bins {
        for t in 0..frames {
            let s = cn(&mut r);
            y[[0, t, f]] = s;
            for i in 0..dim {
                // unit-norm d: per-channel speech power 1/dim, noise 20 dB below
                x[[i, t, f]] = d[f][i] * s + cn(&mut r) * (0.01 / dim as f64).sqrt();
            }
        }
    }
    let xs = Spectrogram::new(x, cfg, FS).unwrap();
    let ys = Spectrogram::new(y, cfg, FS).unwrap();
    let est = steering_from_beamformed(&xs, &ys, 0).unwrap();
    for f in 0..bins {
        let cos = (est.d[f].adjoint() * &d[f])[(0, 0)].norm();
        assert!(cos >= 0.99, "bin {f}: {cos}");
        assert!((est.d[f].norm() - 1.0).abs() < 1e-12);
        assert!(est.d[f][0].im.abs() < 1e-12 && est.d[f][0].re >= 0.0);
    }
}

#[test]
fn apply_beamformer_matches_dot_products() {
    let mut r = rng(9);
    let s = random_spec(&mut r, 3, 30);
    for taps in [1, 2, 3] {
        let w = BeamformerWeights {
            w: (0..s.num_bins()).map(|_| random_vector(&mut r, 3 * taps)).collect(),
            ref_channel: 0,
            taps,
            fallback_bins: vec![],
        };
        let y = apply_beamformer(&w, &s).unwrap();
        for f in 0..s.num_bins() {
            for t in 0..30 {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..taps.min(t + 1) {
                    for i in 0..3 {
                        acc += w.w[f][l * 3 + i].conj() * s.data[[i, t - l, f]];
                    }
                }
                assert!((y.data[[0, t, f]] - acc).norm() <= 1e-12 * acc.norm().max(1.0));
            }
        }
    }
}

#[test]
fn speech_estimate_masks_complement() {
    let mut r = rng(11);
    let mix = random_spec(&mut r, 2, 25);
    let half = mix.with_data(mix.data.mapv(|v| v * 0.5));
    let (ms, mn) = masks_from_speech_estimates(&mix, &half).unwrap();
    assert!(ms.iter().all(|&m| (m - 0.5).abs() < 1e-6));
    let est = random_spec(&mut r, 2, 25);
    let (ms, mn2) = masks_from_speech_estimates(&mix, &est).unwrap();
    assert!(ms.iter().zip(&mn2).all(|(a, b)| (a + b - 1.0).abs() < 1e-6));
    assert!(mn.iter().all(|&m| (m - 0.5).abs() < 1e-6));
}
