use std::io::Write;
use std::process::{Command, Stdio};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::wav::{read_wav_bytes, write_wav_bytes};
use crate::audio::{resample, BitDepth, MultichannelWaveform, Waveform};
use crate::error::Result;

/// Telephone rate the G.711 codecs operate at.
pub const G711_RATE: u32 = 8_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Codec {
    G711Ulaw,
    G711Alaw,
    /// Shell command reading a WAV file on stdin and writing one on stdout.
    External(String),
}

const ULAW_BIAS: i32 = 0x84;
const ULAW_CLIP: i32 = 32_635;

pub fn linear_to_ulaw(pcm: i16) -> u8 {
    let x = pcm as i32;
    let sign = if x < 0 { 0x80 } else { 0 };
    let mag = x.abs().min(ULAW_CLIP) + ULAW_BIAS;
    let exponent = (31 - (mag as u32).leading_zeros()) as i32 - 7;
    let mantissa = (mag >> (exponent + 3)) & 0x0F;
    !((sign | (exponent << 4) | mantissa) as u8)
}

pub fn ulaw_to_linear(code: u8) -> i16 {
    let u = !code as i32;
    let exponent = (u >> 4) & 0x07;
    let mantissa = u & 0x0F;
    let mag = (((mantissa << 3) + ULAW_BIAS) << exponent) - ULAW_BIAS;
    (if u & 0x80 != 0 { -mag } else { mag }) as i16
}

const ALAW_SEG_END: [i32; 8] = [0x1F, 0x3F, 0x7F, 0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF];

pub fn linear_to_alaw(pcm: i16) -> u8 {
    let mut x = (pcm as i32) >> 3;
    let mask = if x >= 0 {
        0xD5
    } else {
        x = -x - 1;
        0x55
    };
    let seg = ALAW_SEG_END.iter().position(|&end| x <= end).unwrap_or(8) as i32;
    let code = if seg >= 8 {
        0x7F
    } else {
        let shift = if seg < 2 { 1 } else { seg };
        (seg << 4) | ((x >> shift) & 0x0F)
    };
    (code ^ mask) as u8
}

/// A-law has no zero level; silence decodes to +-8 on the 16-bit scale.
pub fn alaw_to_linear(code: u8) -> i16 {
    let a = (code ^ 0x55) as i32;
    let seg = (a & 0x70) >> 4;
    let mut t = (a & 0x0F) << 4;
    match seg {
        0 => t += 8,
        1 => t += 0x108,
        _ => t = (t + 0x108) << (seg - 1),
    }
    (if a & 0x80 != 0 { t } else { -t }) as i16
}

fn to_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn fit_length(mut samples: Vec<f64>, len: usize) -> Vec<f64> {
    samples.resize(len, 0.0);
    samples
}

fn g711(w: &Waveform, encode: fn(i16) -> u8, decode: fn(u8) -> i16) -> Result<Waveform> {
    let narrow = resample(w, G711_RATE)?;
    let coded = Waveform {
        samples: narrow
            .samples
            .iter()
            .map(|&x| decode(encode(to_pcm16(x))) as f64 / 32768.0)
            .collect(),
        sample_rate: G711_RATE,
    };
    let back = resample(&coded, w.sample_rate)?;
    Waveform::new(fit_length(back.samples, w.len()), w.sample_rate)
}

fn run_external(cmd: &str, w: &Waveform) -> std::result::Result<Waveform, String> {
    let input = write_wav_bytes(&MultichannelWaveform::from_mono(w.clone()), BitDepth::Pcm16).map_err(|e| e.to_string())?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot start: {e}"))?;
    let mut stdin = child.stdin.take().expect("stdin is piped");
    // Feed stdin from a thread so a command that writes before it has read
    // everything cannot deadlock against us.
    let feeder = std::thread::spawn(move || stdin.write_all(&input));
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    let fed = feeder.join().map_err(|_| "stdin writer panicked".to_string())?;
    if !out.status.success() {
        return Err(format!(
            "exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    fed.map_err(|e| format!("writing stdin: {e}"))?;
    let decoded = read_wav_bytes(&out.stdout).map_err(|e| format!("unreadable output: {e}"))?;
    let mono = decoded.channel(0);
    let back = resample(&mono, w.sample_rate).map_err(|e| e.to_string())?;
    Waveform::new(fit_length(back.samples, w.len()), w.sample_rate).map_err(|e| e.to_string())
}

/// Encode-decode round trip. G.711 runs natively at 8 kHz; external
/// commands that fail leave the audio untouched and log a warning. The
/// output always has the input's rate and length.
pub fn apply_codec(w: &Waveform, codec: &Codec) -> Result<Waveform> {
    match codec {
        Codec::G711Ulaw => g711(w, linear_to_ulaw, ulaw_to_linear),
        Codec::G711Alaw => g711(w, linear_to_alaw, alaw_to_linear),
        Codec::External(cmd) => Ok(run_external(cmd, w).unwrap_or_else(|e| {
            log::warn!("codec command {cmd:?} failed, keeping original audio: {e}");
            w.clone()
        })),
    }
}

/// With probability `prob`, applies one codec drawn uniformly from `codecs`.
/// Returns the codec used, if any.
pub fn maybe_apply_codec<R: Rng>(
    w: &Waveform,
    codecs: &[Codec],
    prob: f64,
    rng: &mut R,
) -> Result<(Waveform, Option<Codec>)> {
    if codecs.is_empty() || prob <= 0.0 || rng.random::<f64>() >= prob {
        return Ok((w.clone(), None));
    }
    let codec = &codecs[rng.random_range(0..codecs.len())];
    Ok((apply_codec(w, codec)?, Some(codec.clone())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn ulaw_known_codes() {
        assert_eq!(linear_to_ulaw(0), 0xFF);
        assert_eq!(ulaw_to_linear(0xFF), 0);
        assert_eq!(linear_to_ulaw(-1), 0x7F);
        assert_eq!(ulaw_to_linear(0x80), 32_124);
        assert_eq!(ulaw_to_linear(0x00), -32_124);
        assert_eq!(linear_to_ulaw(i16::MAX), 0x80);
    }

    #[test]
    fn alaw_known_codes() {
        assert_eq!(linear_to_alaw(0), 0xD5);
        assert_eq!(alaw_to_linear(0xD5), 8);
        assert_eq!(alaw_to_linear(0xAA), 32_256);
        assert_eq!(linear_to_alaw(i16::MAX), 0xAA);
        assert_eq!(linear_to_alaw(i16::MIN), 0x2A);
    }

    #[test]
    fn companding_is_idempotent() {
        for code in 0..=255u8 {
            let u = ulaw_to_linear(code);
            assert_eq!(ulaw_to_linear(linear_to_ulaw(u)), u);
            let a = alaw_to_linear(code);
            assert_eq!(alaw_to_linear(linear_to_alaw(a)), a);
        }
    }

    #[test]
    fn zero_probability_never_codes() {
        let w = Waveform::new(vec![0.1; 100], 16_000).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (out, used) = maybe_apply_codec(&w, &[Codec::G711Ulaw], 0.0, &mut rng).unwrap();
            assert_eq!(out, w);
            assert!(used.is_none());
        }
    }
}
