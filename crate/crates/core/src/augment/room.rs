use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Minimum distance between any source or microphone and a wall.
pub const WALL_MARGIN: f64 = 0.1;
pub const SPEED_OF_SOUND: f64 = 343.0;
/// Length of the windowed-sinc fractional delay kernel.
pub const SINC_TAPS: usize = 81;

/// Shoebox room with one source and one microphone.
///
/// `beta` holds the reflection coefficients of the walls at
/// `x = 0, x = width, y = 0, y = length, z = 0, z = height`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub width: f64,
    pub length: f64,
    pub height: f64,
    pub beta: [f64; 6],
    pub source_pos: [f64; 3],
    pub mic_pos: [f64; 3],
    pub c: f64,
}

impl RoomSpec {
    pub fn dims(&self) -> [f64; 3] {
        [self.width, self.length, self.height]
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        if dims.iter().any(|&d| !(d > 2.0 * WALL_MARGIN)) {
            return Err(Error::invalid(format!("room dimensions {dims:?} too small")));
        }
        if !(self.c > 0.0) {
            return Err(Error::invalid("speed of sound must be positive"));
        }
        if self.beta.iter().any(|&b| !(0.0..1.0).contains(&b)) {
            return Err(Error::invalid(format!("reflection coefficients {:?} outside [0, 1)", self.beta)));
        }
        for (name, p) in [("source", self.source_pos), ("microphone", self.mic_pos)] {
            for axis in 0..3 {
                if !(p[axis] >= WALL_MARGIN - 1e-12 && p[axis] <= dims[axis] - WALL_MARGIN + 1e-12) {
                    return Err(Error::invalid(format!(
                        "{name} position {p:?} closer than {WALL_MARGIN} m to a wall of {dims:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Source-microphone distance in metres.
    pub fn direct_distance(&self) -> f64 {
        dist(self.source_pos, self.mic_pos)
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn uniform_inside(rng: &mut ChaCha8Rng, dims: [f64; 3]) -> [f64; 3] {
    let mut p = [0.0; 3];
    for axis in 0..3 {
        p[axis] = rng.random_range(WALL_MARGIN..dims[axis] - WALL_MARGIN);
    }
    p
}

/// Random room: width U[1.5, 5.5] m, length U[2.5, 16.5] m, height
/// U[2.0, 9.5] m, wall reflection U[0.45, 0.95], source and microphone
/// uniform with a 0.1 m wall margin.
pub fn sample_room(seed: u64) -> RoomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = rng.random_range(1.5..5.5);
    let length = rng.random_range(2.5..16.5);
    let height = rng.random_range(2.0..9.5);
    let mut beta = [0.0; 6];
    for b in &mut beta {
        *b = rng.random_range(0.45..0.95);
    }
    let dims = [width, length, height];
    let source_pos = uniform_inside(&mut rng, dims);
    let mic_pos = uniform_inside(&mut rng, dims);
    RoomSpec {
        width,
        length,
        height,
        beta,
        source_pos,
        mic_pos,
        c: SPEED_OF_SOUND,
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Adds `amp * hann(n - tau) * sinc(n - tau)` for taps within the kernel.
fn add_fractional_impulse(h: &mut [f64], tau: f64, amp: f64) {
    let half = SINC_TAPS as f64 / 2.0;
    let lo = (tau - half).ceil().max(0.0) as i64;
    let hi = ((tau + half).floor() as i64).min(h.len() as i64 - 1);
    for n in lo..=hi {
        let x = n as f64 - tau;
        if x.abs() >= half {
            continue;
        }
        let w = 0.5 * (1.0 + (2.0 * PI * x / SINC_TAPS as f64).cos());
        h[n as usize] += amp * w * sinc(x);
    }
}

/// Image-method room impulse response of `rir_len` samples at `fs`.
///
/// Every image source whose delay can reach the output (within the sinc
/// kernel) contributes `prod(beta^hits) / (4 pi d)` at fractional delay
/// `d / c * fs`. The result is deterministic; a shorter `rir_len` yields a
/// prefix of a longer one up to floating-point summation order.
pub fn simulate_rir(room: &RoomSpec, fs: u32, rir_len: usize) -> Result<Waveform> {
    room.validate()?;
    if fs == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let fs_f = fs as f64;
    let direct = room.direct_distance() / room.c * fs_f;
    if (rir_len as f64) <= direct {
        return Err(Error::invalid(format!(
            "rir_len {rir_len} does not reach the direct path at sample {direct:.1}"
        )));
    }
    let max_dist = (rir_len as f64 + SINC_TAPS as f64 / 2.0) / fs_f * room.c;
    let dims = room.dims();
    let orders: [i64; 3] = std::array::from_fn(|a| (max_dist / (2.0 * dims[a])).ceil() as i64 + 1);
    let (s, r, beta) = (room.source_pos, room.mic_pos, room.beta);

    let partial: Vec<Vec<f64>> = (-orders[0]..=orders[0])
        .into_par_iter()
        .map(|lx| {
            let mut h = vec![0.0; rir_len];
            for ly in -orders[1]..=orders[1] {
                for lz in -orders[2]..=orders[2] {
                    let l = [lx, ly, lz];
                    for u in 0..8u32 {
                        let q = [(u & 1) as i64, ((u >> 1) & 1) as i64, ((u >> 2) & 1) as i64];
                        let mut img = [0.0; 3];
                        let mut refl = 1.0;
                        for a in 0..3 {
                            img[a] = (1 - 2 * q[a]) as f64 * s[a] + 2.0 * l[a] as f64 * dims[a];
                            refl *= beta[2 * a].powi((l[a] - q[a]).unsigned_abs() as i32)
                                * beta[2 * a + 1].powi(l[a].unsigned_abs() as i32);
                        }
                        let d = dist(img, r);
                        if d > max_dist || refl == 0.0 {
                            continue;
                        }
                        add_fractional_impulse(&mut h, d / room.c * fs_f, refl / (4.0 * PI * d));
                    }
                }
            }
            h
        })
        .collect();
    let mut h = vec![0.0; rir_len];
    for p in &partial {
        for (a, b) in h.iter_mut().zip(p) {
            *a += b;
        }
    }
    Waveform::new(h, fs)
}
