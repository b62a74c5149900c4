//! Session manifests, oracle diarization and segment cutting.
//!
//! A manifest lists one recording session: the per-microphone WAV files
//! and the oracle segments of every speaker. Segments are cut with left
//! and right context, and the speaker activity inside the cut is
//! rasterized onto the STFT frame grid.

use std::collections::{BTreeMap, HashSet};
use std::ops::Range;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, MultichannelWaveform, StftConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentAnnotation {
    pub utt_id: String,
    #[serde(rename = "speaker")]
    pub speaker_id: String,
    pub start: f64,
    pub end: f64,
    #[serde(rename = "group", default)]
    pub group_key: String,
}

impl SegmentAnnotation {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    #[serde(rename = "channels")]
    pub channel_paths: Vec<PathBuf>,
    pub segments: Vec<SegmentAnnotation>,
}

fn manifest_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Manifest {
        field: field.into(),
        message: message.into(),
    }
}

impl SessionManifest {
    /// Structural checks that need no audio. Overlapping segments are fine.
    pub fn validate(&self) -> Result<()> {
        if self.session_id.is_empty() {
            return Err(manifest_err("session_id", "must not be empty"));
        }
        if self.channel_paths.is_empty() {
            return Err(manifest_err("channels", "at least one channel is required"));
        }
        let mut seen = HashSet::new();
        for (i, seg) in self.segments.iter().enumerate() {
            let field = |f: &str| format!("segments[{i}].{f}");
            if seg.utt_id.is_empty() {
                return Err(manifest_err(field("utt_id"), "must not be empty"));
            }
            if !seen.insert(seg.utt_id.as_str()) {
                return Err(manifest_err(
                    field("utt_id"),
                    format!("duplicate utt_id {:?}", seg.utt_id),
                ));
            }
            if !seg.start.is_finite() || !seg.end.is_finite() || seg.start < 0.0 {
                return Err(manifest_err(
                    field("start"),
                    format!("utt_id {:?}: times must be finite and start >= 0", seg.utt_id),
                ));
            }
            if seg.end <= seg.start {
                return Err(manifest_err(
                    field("end"),
                    format!(
                        "utt_id {:?}: end {} is not after start {}",
                        seg.utt_id, seg.end, seg.start
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Checks every segment lies inside a recording of `duration` seconds.
    pub fn validate_duration(&self, duration: f64) -> Result<()> {
        // half a millisecond of slack for rounded annotations
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.end > duration + 5e-4 {
                return Err(manifest_err(
                    format!("segments[{i}].end"),
                    format!(
                        "utt_id {:?} ends at {} s, recording is {duration} s",
                        seg.utt_id, seg.end
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn segment(&self, utt_id: &str) -> Result<&SegmentAnnotation> {
        self.segments
            .iter()
            .find(|s| s.utt_id == utt_id)
            .ok_or_else(|| Error::UnknownUtterance(utt_id.to_string()))
    }
}

/// Parses and validates a manifest file. Relative channel paths are
/// resolved against the manifest's directory; every channel must exist and
/// share one length and sample rate.
pub fn load_session_manifest(path: impl AsRef<Path>) -> Result<SessionManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.to_path_buf())
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let mut m: SessionManifest = serde_json::from_str(&text)
        .map_err(|e| manifest_err(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in m.channel_paths.iter_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    m.validate()?;

    let mut geometry: Option<(u32, u32)> = None;
    for (i, p) in m.channel_paths.iter().enumerate() {
        if !p.exists() {
            return Err(Error::MissingFile(p.clone()));
        }
        let reader = hound::WavReader::open(p).map_err(|e| manifest_err(format!("channels[{i}]"), e.to_string()))?;
        let g = (reader.duration(), reader.spec().sample_rate);
        match geometry {
            None => geometry = Some(g),
            Some(first) if first != g => {
                return Err(manifest_err(
                    format!("channels[{i}]"),
                    "length or sample rate differs from channels[0]",
                ))
            }
            _ => {}
        }
    }
    if let Some((frames, rate)) = geometry {
        m.validate_duration(frames as f64 / rate as f64)?;
    }
    Ok(m)
}

/// Reads every channel of the session (each file may itself be
/// multichannel) and resamples to `rate`.
pub fn load_session_audio(m: &SessionManifest, rate: u32) -> Result<MultichannelWaveform> {
    let mut channels = Vec::new();
    for p in &m.channel_paths {
        channels.extend(read_wav(p)?.channels());
    }
    MultichannelWaveform::from_channels(channels)?.resampled(rate)
}

/// Per-speaker binary activity on an STFT frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityGrid {
    pub speakers: Vec<String>,
    /// `(speaker, frame)`.
    pub activity: Array2<bool>,
    pub config: StftConfig,
}

impl ActivityGrid {
    pub fn num_frames(&self) -> usize {
        self.activity.ncols()
    }

    pub fn speaker_index(&self, speaker: &str) -> Option<usize> {
        self.speakers.iter().position(|s| s == speaker)
    }

    /// Drops speakers without a single active frame.
    pub fn without_inactive(&self) -> Self {
        let keep: Vec<usize> = (0..self.speakers.len())
            .filter(|&k| self.activity.row(k).iter().any(|&a| a))
            .collect();
        Self {
            speakers: keep.iter().map(|&k| self.speakers[k].clone()).collect(),
            activity: self.activity.select(ndarray::Axis(0), &keep),
            config: self.config,
        }
    }

    /// Runs of active frames for `speaker` as sample intervals between the
    /// first and last active frame centres.
    pub fn intervals(&self, speaker: usize) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        let mut run: Option<usize> = None;
        let row = self.activity.row(speaker);
        for t in 0..=row.len() {
            let active = t < row.len() && row[t];
            match (active, run) {
                (true, None) => run = Some(t),
                (false, Some(s)) => {
                    out.push((self.config.frame_center(s), self.config.frame_center(t - 1)));
                    run = None;
                }
                _ => {}
            }
        }
        out
    }
}

/// Frames whose window overlaps `[start, end)` (unpadded samples) by at
/// least half a window. A non-empty interval always claims at least the
/// frame nearest its midpoint.
pub fn rasterize(cfg: &StftConfig, frames: usize, start: i64, end: i64) -> Vec<usize> {
    let half = (cfg.window_length / 2) as i64;
    let mut active: Vec<usize> = (0..frames)
        .filter(|&t| {
            let (fs, fe) = cfg.frame_span(t);
            fe.min(end) - fs.max(start) >= half
        })
        .collect();
    if active.is_empty() && end > start && frames > 0 {
        let mid = (start + end) / 2;
        let t = ((mid.max(0) as f64) / cfg.hop as f64).round() as usize;
        active.push(t.min(frames - 1));
    }
    active
}

/// The utterance proper inside a context-extended cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreRegion {
    /// Sample range relative to the cut audio.
    pub samples: Range<usize>,
    /// STFT frames covering the core samples.
    pub frames: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct SegmentCut {
    pub utt_id: String,
    pub target_speaker: String,
    pub audio: MultichannelWaveform,
    pub activity: ActivityGrid,
    pub core: CoreRegion,
    /// Offset of the cut in the session recording, in samples.
    pub offset: usize,
}

/// Cuts `utt_id` with `context_secs` on each side, clamped to the recording,
/// and rasterizes every segment intersecting the cut onto the frame grid.
pub fn cut_segment_with_context(
    m: &SessionManifest,
    audio: &MultichannelWaveform,
    utt_id: &str,
    context_secs: f64,
    stft: &StftConfig,
) -> Result<SegmentCut> {
    if !(context_secs >= 0.0) {
        return Err(Error::invalid("context_secs must be >= 0"));
    }
    let seg = m.segment(utt_id)?;
    let rate = audio.sample_rate() as f64;
    let len = audio.len();
    let to_sample = |secs: f64| ((secs * rate).round().max(0.0) as usize).min(len);
    let (start, end) = (to_sample(seg.start), to_sample(seg.end));
    let ctx = (context_secs * rate).round() as usize;
    let left = start.saturating_sub(ctx);
    let right = (end + ctx).min(len);
    let cut = audio.slice(left, right)?;
    let frames = stft.num_frames(right - left);

    let mut speakers: Vec<String> = Vec::new();
    let mut activity: Vec<Vec<bool>> = Vec::new();
    for s in &m.segments {
        let (ss, se) = (to_sample(s.start), to_sample(s.end));
        if se <= left || ss >= right {
            continue;
        }
        let k = match speakers.iter().position(|x| *x == s.speaker_id) {
            Some(k) => k,
            None => {
                speakers.push(s.speaker_id.clone());
                activity.push(vec![false; frames]);
                speakers.len() - 1
            }
        };
        for t in rasterize(stft, frames, ss as i64 - left as i64, se as i64 - left as i64) {
            activity[k][t] = true;
        }
    }
    let mut grid = Array2::from_elem((speakers.len(), frames), false);
    for (k, row) in activity.iter().enumerate() {
        for (t, &a) in row.iter().enumerate() {
            grid[[k, t]] = a;
        }
    }

    let core_samples = (start - left)..(end - left);
    let core_frames = rasterize(stft, frames, core_samples.start as i64, core_samples.end as i64);
    let (Some(&first), Some(&last)) = (core_frames.first(), core_frames.last()) else {
        return Err(Error::invalid(format!("utterance {utt_id:?} is shorter than one sample")));
    };
    let core = CoreRegion {
        frames: first..last + 1,
        samples: core_samples,
    };
    Ok(SegmentCut {
        utt_id: utt_id.to_string(),
        target_speaker: seg.speaker_id.clone(),
        audio: cut,
        activity: ActivityGrid {
            speakers,
            activity: grid,
            config: *stft,
        },
        core,
        offset: left,
    })
}

fn group_seed(seed: u64, group: &str) -> u64 {
    // FNV-1a keeps per-group streams stable across runs and platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in group.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

/// Per group: shuffle with `seed`, then take entries until the cumulative
/// duration first reaches the group's target (hours). Groups short of their
/// target, or without one, are returned whole. Output keeps input order.
pub fn subset_by_hours(
    entries: &[SegmentAnnotation],
    target_hours: &BTreeMap<String, f64>,
    seed: u64,
) -> Vec<SegmentAnnotation> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        groups.entry(e.group_key.as_str()).or_default().push(i);
    }
    let mut keep = vec![false; entries.len()];
    for (group, mut idx) in groups {
        let Some(&hours) = target_hours.get(group) else {
            idx.iter().for_each(|&i| keep[i] = true);
            continue;
        };
        let target = hours * 3600.0;
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(seed, group));
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        for i in idx {
            if total >= target {
                break;
            }
            total += entries[i].duration();
            keep[i] = true;
        }
    }
    entries
        .iter()
        .zip(keep)
        .filter_map(|(e, k)| k.then(|| e.clone()))
        .collect()
}
