//! Data augmentation: image-method room simulation, background-speaker
//! insertion, speed perturbation and codec degradation.

mod codec;
mod mix;
mod room;

pub use codec::{
    alaw_to_linear, apply_codec, linear_to_alaw, linear_to_ulaw, maybe_apply_codec, ulaw_to_linear, Codec, G711_RATE,
};
pub use mix::{background_excerpt, mix_at, mix_background_speaker, MixConfig, MixResult};
pub use room::{sample_room, simulate_rir, RoomSpec, SINC_TAPS, SPEED_OF_SOUND, WALL_MARGIN};

use crate::audio::{resample_by_ratio, Waveform};
use crate::error::{Error, Result};

/// The three speed factors used for perturbation.
pub const SPEED_FACTORS: [f64; 3] = [0.9, 1.0, 1.1];

/// Resampling-based speed change: tempo and pitch scale by `factor`, the
/// output has `round(len / factor)` samples at the same rate.
pub fn speed_perturb(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid(format!("speed factor {factor} must be positive")));
    }
    if factor == 1.0 {
        return Ok(w.clone());
    }
    let out_len = (w.len() as f64 / factor).round() as usize;
    Waveform::new(resample_by_ratio(&w.samples, factor, out_len), w.sample_rate)
}
