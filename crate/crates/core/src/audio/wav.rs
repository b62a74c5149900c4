use std::io::{Read, Seek, Write};
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use ndarray::Array2;

use super::MultichannelWaveform;
use crate::error::{Error, Result};

/// Sample encodings accepted by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Pcm24,
    Float32,
}

impl BitDepth {
    fn spec(self, channels: u16, sample_rate: u32) -> WavSpec {
        let (bits, format) = match self {
            BitDepth::Pcm16 => (16, SampleFormat::Int),
            BitDepth::Pcm24 => (24, SampleFormat::Int),
            BitDepth::Float32 => (32, SampleFormat::Float),
        };
        WavSpec {
            channels,
            sample_rate,
            bits_per_sample: bits,
            sample_format: format,
        }
    }
}

/// Reads a RIFF/WAVE file (PCM16, PCM24 or float32) into `[-1, 1]` floats.
///
/// Integer samples are scaled by `2^-(bits-1)`, so 16-bit 32767 becomes
/// 32767/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelWaveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = WavReader::open(path).map_err(|e| map_hound(e, path))?;
    decode(reader, path)
}

pub(crate) fn read_wav_bytes(bytes: &[u8]) -> Result<MultichannelWaveform> {
    let path = Path::new("<memory>");
    let reader = WavReader::new(std::io::Cursor::new(bytes)).map_err(|e| map_hound(e, path))?;
    decode(reader, path)
}

fn decode<R: Read>(reader: WavReader<R>, path: &Path) -> Result<MultichannelWaveform> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| map_hound(e, path))?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(e, path))?,
        (format, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {format:?} samples"),
            })
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            detail: "partial sample frame at end of data".into(),
        });
    }
    let frames = interleaved.len() / channels;
    let data = Array2::from_shape_vec((frames, channels), interleaved)
        .expect("frame count divides sample count")
        .reversed_axes()
        .as_standard_layout()
        .to_owned();
    MultichannelWaveform::new(data, spec.sample_rate)
}

/// Writes `w` with the given encoding. Integer encodings saturate values
/// outside `[-1, 1)` and log a warning.
pub fn write_wav(path: impl AsRef<Path>, w: &MultichannelWaveform, bit_depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    encode(std::io::BufWriter::new(file), w, bit_depth, path)
}

pub(crate) fn write_wav_bytes(w: &MultichannelWaveform, bit_depth: BitDepth) -> Result<Vec<u8>> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    encode(&mut cursor, w, bit_depth, Path::new("<memory>"))?;
    Ok(cursor.into_inner())
}

fn encode<W: Write + Seek>(
    sink: W,
    w: &MultichannelWaveform,
    bit_depth: BitDepth,
    path: &Path,
) -> Result<()> {
    if w.data().iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite);
    }
    let channels = u16::try_from(w.num_channels())
        .map_err(|_| Error::invalid("too many channels for WAV"))?;
    let mut writer =
        WavWriter::new(sink, bit_depth.spec(channels, w.sample_rate())).map_err(|e| map_hound(e, path))?;
    let mut clipped = 0usize;
    let data = w.data();
    for t in 0..w.len() {
        for c in 0..w.num_channels() {
            let x = data[[c, t]];
            let res = match bit_depth {
                BitDepth::Float32 => writer.write_sample(x as f32),
                BitDepth::Pcm16 | BitDepth::Pcm24 => {
                    let full = if bit_depth == BitDepth::Pcm16 { 32768.0 } else { 8_388_608.0 };
                    let q = (x * full).round();
                    let sat = q.clamp(-full, full - 1.0);
                    if sat != q {
                        clipped += 1;
                    }
                    writer.write_sample(sat as i32)
                }
            };
            res.map_err(|e| map_hound(e, path))?;
        }
    }
    writer.finalize().map_err(|e| map_hound(e, path))?;
    if clipped > 0 {
        log::warn!(
            "{}: {clipped} samples saturated while writing {bit_depth:?}",
            path.display()
        );
    }
    Ok(())
}

fn map_hound(e: hound::Error, path: &Path) -> Error {
    let path: PathBuf = path.to_path_buf();
    match e {
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Truncated {
                path,
                detail: "unexpected end of file".into(),
            }
        }
        // hound reports a short data chunk as an `Other` error with this text.
        hound::Error::IoError(io) if io.to_string().contains("enough bytes") => Error::Truncated {
            path,
            detail: io.to_string(),
        },
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingFile(path),
        hound::Error::IoError(source) => Error::Io { path, source },
        hound::Error::UnfinishedSample => Error::Truncated {
            path,
            detail: "data ends inside a sample".into(),
        },
        hound::Error::FormatError(msg) => Error::Truncated {
            path,
            detail: msg.into(),
        },
        other => Error::UnsupportedFormat {
            path,
            detail: other.to_string(),
        },
    }
}
