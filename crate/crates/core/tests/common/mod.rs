//! Synthetic signals and scenes shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;

use farfield_core::augment::{sample_room, simulate_rir, RoomSpec};
use farfield_core::audio::{fft_convolve, MultichannelWaveform, Waveform};
use farfield_core::manifest::{SegmentAnnotation, SessionManifest};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FS: u32 = 16_000;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn tone(freq: f64, n: usize, fs: u32) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs as f64).sin()).collect()
}

/// Voiced syllables (harmonics of a drifting pitch shaped by three
/// formant resonances) separated by short pauses, with occasional noise
/// bursts standing in for fricatives. `active` restricts where the source
/// talks, as half-open sample ranges.
pub fn speech_like(seed: u64, n: usize, active: &[(usize, usize)]) -> Vec<f64> {
    let mut rng = rng(seed);
    let fs = FS as f64;
    let base_f0 = rng.random_range(95.0..230.0);
    let mut out = vec![0.0; n];
    for &(lo, hi) in active {
        let mut t = lo;
        let mut phase = 0.0f64;
        while t < hi {
            let syl = ((rng.random_range(0.12..0.30) * fs) as usize).min(hi - t);
            let formants = [
                rng.random_range(300.0..900.0),
                rng.random_range(900.0..2300.0),
                rng.random_range(2300.0..3500.0),
            ];
            let f0_start = base_f0 * rng.random_range(0.85..1.15);
            let f0_end = base_f0 * rng.random_range(0.85..1.15);
            let fricative = rng.random_bool(0.3);
            let level = rng.random_range(0.5..1.0);
            for k in 0..syl {
                let u = k as f64 / syl as f64;
                let env = (PI * u).sin().powi(2) * level;
                let f0 = f0_start + (f0_end - f0_start) * u;
                phase += 2.0 * PI * f0 / fs;
                let mut v = 0.0;
                let mut h = 1.0;
                while h * f0 < 4000.0 {
                    let f = h * f0;
                    let gain: f64 = formants
                        .iter()
                        .enumerate()
                        .map(|(j, &fm)| (1.0 / (j + 1) as f64) / (1.0 + ((f - fm) / 120.0).powi(2)))
                        .sum();
                    v += gain * (h * phase).sin();
                    h += 1.0;
                }
                if fricative && u > 0.7 {
                    let r: f64 = StandardNormal.sample(&mut rng);
                    v += 0.3 * r;
                }
                out[t + k] = 0.1 * env * v;
            }
            t += syl;
            t += ((rng.random_range(0.03..0.15) * fs) as usize).min(hi - t);
        }
    }
    out
}

pub fn conv_trunc(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = fft_convolve(x, h);
    y.truncate(x.len());
    y
}

pub fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// A two-speaker recording on a 4-microphone linear array.
pub struct Scene {
    pub manifest: SessionManifest,
    pub audio: MultichannelWaveform,
    /// Target speaker's direct path plus 50 ms of early reflections, per mic.
    pub target_early: Vec<Vec<f64>>,
    pub target_utt: String,
}

pub const ARRAY_MICS: usize = 4;
pub const ARRAY_SPACING: f64 = 0.08;

fn inside(rng: &mut ChaCha8Rng, room: &RoomSpec, margin: f64) -> [f64; 3] {
    let d = [room.width, room.length, room.height];
    std::array::from_fn(|a| rng.random_range(margin..d[a] - margin))
}

/// Mic-array RIRs for one source in `room`.
pub fn array_rirs(room: &RoomSpec, center: [f64; 3], source: [f64; 3], len: usize) -> Vec<Vec<f64>> {
    (0..ARRAY_MICS)
        .map(|m| {
            let mut r = room.clone();
            r.source_pos = source;
            r.mic_pos = center;
            r.mic_pos[0] += (m as f64 - (ARRAY_MICS as f64 - 1.0) / 2.0) * ARRAY_SPACING;
            simulate_rir(&r, FS, len).unwrap().samples
        })
        .collect()
}

/// Ten seconds: the target talks in [2.0, 7.0) s, the interferer in
/// [0.5, 3.5) and [5.5, 9.5) s, with weak sensor noise.
pub fn two_speaker_scene(seed: u64) -> Scene {
    let mut r = rng(seed ^ 0x5eed);
    let mut room = sample_room(seed);
    let n = 10 * FS as usize;
    let sec = |s: f64| (s * FS as f64) as usize;
    let center = {
        let mut c = inside(&mut r, &room, 0.4);
        c[2] = c[2].min(2.0).max(0.5);
        c
    };
    let place = |r: &mut ChaCha8Rng, room: &RoomSpec| loop {
        let p = inside(r, room, 0.3);
        let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt();
        if (0.8..3.0).contains(&d) {
            return p;
        }
    };
    // Tiny rooms cannot always host both sources at these distances.
    room.length = room.length.max(4.0);
    room.width = room.width.max(3.0);
    let s_target = place(&mut r, &room);
    let s_interf = place(&mut r, &room);
    let rir_len = sec(0.4);
    let h_t = array_rirs(&room, center, s_target, rir_len);
    let h_i = array_rirs(&room, center, s_interf, rir_len);
    let target = speech_like(seed * 2 + 1, n, &[(sec(2.0), sec(7.0))]);
    let interf = speech_like(seed * 2 + 2, n, &[(sec(0.5), sec(3.5)), (sec(5.5), sec(9.5))]);
    let early = sec(0.05);
    let mut data = Array2::zeros((ARRAY_MICS, n));
    let mut target_early = Vec::new();
    for m in 0..ARRAY_MICS {
        let direct = h_t[m].iter().position(|v| v.abs() > 0.0).unwrap_or(0);
        let peak = (0..h_t[m].len()).max_by(|&a, &b| h_t[m][a].abs().total_cmp(&h_t[m][b].abs())).unwrap_or(direct);
        let cut = (peak + early).min(rir_len);
        let te = conv_trunc(&target, &h_t[m][..cut]);
        let yt = conv_trunc(&target, &h_t[m]);
        let yi = conv_trunc(&interf, &h_i[m]);
        let noise = gaussian(&mut r, n);
        let ns = (power(&yt) * 1e-3).sqrt();
        for t in 0..n {
            data[[m, t]] = yt[t] + yi[t] + ns * noise[t];
        }
        target_early.push(te);
    }
    let peak = data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    data.mapv_inplace(|v| v * 0.5 / peak);
    for te in &mut target_early {
        te.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    let seg = |utt: &str, spk: &str, s: f64, e: f64| SegmentAnnotation {
        utt_id: utt.into(),
        speaker_id: spk.into(),
        start: s,
        end: e,
        group_key: "sim".into(),
    };
    let manifest = SessionManifest {
        session_id: format!("sim{seed}"),
        channel_paths: (0..ARRAY_MICS).map(|m| format!("ch{m}.wav").into()).collect(),
        segments: vec![
            seg("i1", "interferer", 0.5, 3.5),
            seg("t1", "target", 2.0, 7.0),
            seg("i2", "interferer", 5.5, 9.5),
        ],
    };
    Scene {
        manifest,
        audio: MultichannelWaveform::new(data, FS).unwrap(),
        target_early,
        target_utt: "t1".into(),
    }
}

pub fn mono(samples: Vec<f64>) -> Waveform {
    Waveform::new(samples, FS).unwrap()
}
