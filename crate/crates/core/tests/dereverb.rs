mod common;

use std::time::Instant;

use common::*;
use farfield_core::audio::{Spectrogram, StftConfig};
use farfield_core::dereverb::{history, wpe, wpe_bin, WpeConfig};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use proptest::prelude::*;

fn small_config() -> StftConfig {
    StftConfig {
        window_length: 32,
        hop: 8,
        fft_size: 32,
        ..StftConfig::default()
    }
}

fn complex_noise(seed: u64, shape: (usize, usize, usize)) -> Array3<Complex64> {
    let mut r = rng(seed);
    let n = shape.0 * shape.1 * shape.2;
    let re = gaussian(&mut r, n);
    let im = gaussian(&mut r, n);
    let v = re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect();
    Array3::from_shape_vec(shape, v).unwrap()
}

fn energy<'a>(it: impl IntoIterator<Item = &'a Complex64>) -> f64 {
    it.into_iter().map(|v| v.norm_sqr()).sum()
}

#[test]
fn white_noise_keeps_its_energy() {
    let cfg = small_config();
    for trial in 0..10 {
        let s = Spectrogram::new(complex_noise(trial, (2, 400, cfg.num_bins())), cfg, FS).unwrap();
        let y = wpe(&s, &WpeConfig::default()).unwrap();
        let ratio_db = 10.0 * (energy(&y.data) / energy(&s.data)).log10();
        assert!(ratio_db.abs() <= 1.0, "trial {trial}: {ratio_db:.3} dB");
    }
}

/// Two channels, each an independent complex Gaussian source plus its own
/// copy delayed by `delay + 1` frames at -6 dB.
fn echo_bin(seed: u64, frames: usize, delay: usize) -> (Array2<Complex64>, Array2<Complex64>) {
    let s = complex_noise(seed, (frames, 2, 1)).into_shape_with_order((frames, 2)).unwrap();
    let mut x = s.clone();
    for t in delay + 1..frames {
        for i in 0..2 {
            x[[t, i]] += s[[t - delay - 1, i]] * 0.5;
        }
    }
    (x, s)
}

/// Echo left in `y`, relative to the echo in the input, in dB: the
/// projection of each channel onto its delayed source.
fn residual_echo_db(y: &Array2<Complex64>, s: &Array2<Complex64>, lag: usize) -> f64 {
    let frames = y.nrows();
    (0..y.ncols())
        .map(|i| {
            let num: Complex64 = (lag..frames).map(|t| y[[t, i]] * s[[t - lag, i]].conj()).sum();
            let den: f64 = (lag..frames).map(|t| s[[t - lag, i]].norm_sqr()).sum();
            20.0 * (0.5 / (num / den).norm()).log10()
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn late_echo_is_suppressed() {
    let cfg = WpeConfig::default();
    for seed in 0..5 {
        let (x, s) = echo_bin(seed, 2000, cfg.delay);
        let y = wpe_bin(x.view(), &cfg, 0).unwrap().output;
        let db = residual_echo_db(&y, &s, cfg.delay + 1);
        assert!(db >= 10.0, "seed {seed}: echo reduced by {db:.2} dB");
    }
}

#[test]
fn residual_is_orthogonal_to_history() {
    let cfg = WpeConfig::default();
    let x = complex_noise(9, (300, 3, 1)).into_shape_with_order((300, 3)).unwrap();
    // give the channels some shared predictable structure
    let mut x = x.clone();
    for t in 4..300 {
        for i in 0..3 {
            let v = x[[t - 4, (i + 1) % 3]] * 0.4;
            x[[t, i]] += v;
        }
    }
    let bin = wpe_bin(x.view(), &cfg, 0).unwrap();
    let dim = 3 * cfg.taps;
    let mut h = vec![Complex64::new(0.0, 0.0); dim];
    let mut cross = Array2::<Complex64>::zeros((dim, 3));
    let mut p = Array2::<Complex64>::zeros((dim, 3));
    for t in 0..300 {
        history(x.view(), t, cfg.delay, cfg.taps, &mut h);
        for a in 0..dim {
            for i in 0..3 {
                cross[[a, i]] += h[a] * bin.output[[t, i]].conj() / bin.lambda[t];
                p[[a, i]] += h[a] * x[[t, i]].conj() / bin.lambda[t];
            }
        }
    }
    let norm = |m: &Array2<Complex64>| energy(m.iter()).sqrt();
    assert!(norm(&cross) <= 1e-4 * norm(&p), "{} vs {}", norm(&cross), norm(&p));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn complex_scaling_commutes(seed in any::<u64>(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
        prop_assume!(re.hypot(im) > 0.05);
        let c = Complex64::new(re, im);
        let cfg = small_config();
        let s = Spectrogram::new(complex_noise(seed, (2, 60, cfg.num_bins())), cfg, FS).unwrap();
        let y = wpe(&s, &WpeConfig::default()).unwrap();
        let ys = wpe(&s.with_data(s.data.mapv(|v| v * c)), &WpeConfig::default()).unwrap();
        let diff = energy((&ys.data - &y.data.mapv(|v| v * c)).iter()).sqrt();
        prop_assert!(diff <= 1e-6 * energy(ys.data.iter()).sqrt());
    }

    #[test]
    fn shape_is_preserved(seed in any::<u64>(), ch in 1usize..4, frames in 13usize..40) {
        let cfg = small_config();
        let s = Spectrogram::new(complex_noise(seed, (ch, frames, cfg.num_bins())), cfg, FS).unwrap();
        prop_assert_eq!(wpe(&s, &WpeConfig::default()).unwrap().data.dim(), s.data.dim());
    }
}

#[test]
fn ten_second_four_channel_runtime() {
    let cfg = StftConfig::default();
    let frames = cfg.num_frames(10 * FS as usize);
    let s = Spectrogram::new(complex_noise(1, (4, frames, 513)), cfg, FS).unwrap();
    let start = Instant::now();
    wpe(&s, &WpeConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "{secs:.1} s");
}
