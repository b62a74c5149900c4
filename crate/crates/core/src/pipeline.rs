//! The guided source separation chain and its batch driver.
//!
//! Per segment: envelope-variance channel selection, STFT, WPE, guided
//! CACGMM masks, MVDR from core-frame statistics, an optional mask
//! post-filter or CWMWF with CBAN, synthesis, trimming to the core and peak
//! normalisation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::{s, Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{istft, stft, write_wav, BitDepth, MultichannelWaveform, Spectrogram, StftConfig, Waveform, PROCESSING_RATE};
use crate::beamform::{
    apply_beamformer, apply_gain, ban_gain, cwmwf, mask_postfilter, mvdr_souden, output_psd, peak_normalize,
    scm_from_mask, select_reference_channel, stack_taps, steering_from_beamformed,
};
use crate::channel_select::{envelope_variance_scores, select_channels, EvConfig};
use crate::dereverb::{wpe, WpeConfig};
use crate::error::{Error, Result};
use crate::manifest::{cut_segment_with_context, load_session_audio, ActivityGrid, CoreRegion, SegmentCut, SessionManifest};
use crate::mask_model::{fit_guided_cacgmm, CacgmmConfig, Masks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Gss,
    GssPostfilter,
    CwmwfCban,
}

impl Variant {
    /// Context the evaluated systems were run with: 15 s, or 1 s for CWMWF.
    pub fn default_context_secs(self) -> f64 {
        match self {
            Variant::CwmwfCban => 1.0,
            _ => 15.0,
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "gss" => Ok(Variant::Gss),
            "gss_postfilter" => Ok(Variant::GssPostfilter),
            "cwmwf_cban" => Ok(Variant::CwmwfCban),
            _ => Err(Error::invalid(format!(
                "unknown variant {s:?} (expected gss, gss-postfilter or cwmwf-cban)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Gss => "gss",
            Variant::GssPostfilter => "gss-postfilter",
            Variant::CwmwfCban => "cwmwf-cban",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub context_secs: f64,
    pub keep_fraction: f64,
    pub ev: EvConfig,
    pub stft: StftConfig,
    pub wpe: WpeConfig,
    pub cacgmm: CacgmmConfig,
    /// CWMWF filter length in frames.
    pub taps: usize,
    /// Recorded in the run report; every stage is deterministic.
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            context_secs: variant.default_context_secs(),
            keep_fraction: 0.8,
            ev: EvConfig::default(),
            stft: StftConfig::default(),
            wpe: WpeConfig::default(),
            cacgmm: CacgmmConfig::default(),
            taps: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.context_secs >= 0.0) {
            return Err(Error::invalid("context_secs must be >= 0"));
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return Err(Error::invalid("keep_fraction must lie in (0, 1]"));
        }
        if self.variant == Variant::CwmwfCban && self.taps == 0 {
            return Err(Error::invalid("taps must be >= 1"));
        }
        self.stft.validate()?;
        self.wpe.validate()?;
        self.cacgmm.validate()
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new(Variant::Gss)
    }
}

#[derive(Debug, Clone)]
pub struct EnhanceOutput {
    /// Enhanced core-region audio.
    pub waveform: Waveform,
    /// Single-channel spectrum that was synthesised, before trimming and
    /// peak normalisation; covers the whole cut.
    pub spectrum: Spectrogram,
    /// Kept input channels, ascending.
    pub selected_channels: Vec<usize>,
    /// Reference channel as an index into the original input.
    pub reference_channel: usize,
    /// Degenerate-case notes such as fallback bins.
    pub flags: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Postfilter {
    Target,
    Unit,
}

/// Enhances the core region of `audio` for `target_speaker`.
pub fn enhance_segment(
    audio: &MultichannelWaveform,
    act: &ActivityGrid,
    core: &CoreRegion,
    target_speaker: &str,
    cfg: &PipelineConfig,
) -> Result<EnhanceOutput> {
    run(audio, act, core, target_speaker, cfg, Postfilter::Target)
}

pub fn enhance_cut(cut: &SegmentCut, cfg: &PipelineConfig) -> Result<EnhanceOutput> {
    enhance_segment(&cut.audio, &cut.activity, &cut.core, &cut.target_speaker, cfg).map_err(|e| Error::Segment {
        utt_id: cut.utt_id.clone(),
        source: Box::new(e),
    })
}

/// The post-filter chain with the mask replaced by ones; exists so the
/// wiring can be checked against the plain chain.
#[doc(hidden)]
pub fn enhance_segment_unit_postfilter(
    audio: &MultichannelWaveform,
    act: &ActivityGrid,
    core: &CoreRegion,
    target_speaker: &str,
    cfg: &PipelineConfig,
) -> Result<EnhanceOutput> {
    let cfg = PipelineConfig {
        variant: Variant::GssPostfilter,
        ..cfg.clone()
    };
    run(audio, act, core, target_speaker, &cfg, Postfilter::Unit)
}

/// Masks equal to the activity prior; what the mixture model degenerates
/// to with a single channel, where every direction looks alike.
fn prior_masks(grid: &ActivityGrid, target_index: usize, bins: usize) -> Masks {
    let activity = crate::mask_model::with_noise_class(grid);
    let (classes, frames) = activity.dim();
    let mut gamma = Array3::zeros((classes, frames, bins));
    for t in 0..frames {
        let active = activity.column(t).iter().filter(|&&a| a).count() as f64;
        for k in 0..classes {
            if activity[[k, t]] {
                gamma.slice_mut(s![k, t, ..]).fill(1.0 / active);
            }
        }
    }
    let mut classes_names = grid.speakers.clone();
    classes_names.push("<noise>".into());
    Masks {
        gamma,
        classes: classes_names,
        target_index,
    }
}

fn flag_bins(flags: &mut Vec<String>, what: &str, bins: &[usize]) {
    if !bins.is_empty() {
        flags.push(format!("{what}: {} bins", bins.len()));
    }
}

fn run(
    audio: &MultichannelWaveform,
    act: &ActivityGrid,
    core: &CoreRegion,
    target_speaker: &str,
    cfg: &PipelineConfig,
    postfilter: Postfilter,
) -> Result<EnhanceOutput> {
    cfg.validate()?;
    if audio.sample_rate() != PROCESSING_RATE {
        return Err(Error::invalid(format!(
            "segment audio must be at {PROCESSING_RATE} Hz, got {}",
            audio.sample_rate()
        )));
    }
    if act.config != cfg.stft || act.num_frames() != cfg.stft.num_frames(audio.len()) {
        return Err(Error::shape("activity grid is not aligned with the STFT of the segment"));
    }
    if core.samples.end > audio.len() || core.frames.end > act.num_frames() || core.frames.is_empty() {
        return Err(Error::shape("core region lies outside the segment"));
    }
    let grid = act.without_inactive();
    let target_index = grid
        .speaker_index(target_speaker)
        .filter(|&k| grid.activity.slice(s![k, core.frames.clone()]).iter().any(|&a| a))
        .ok_or_else(|| Error::TargetInactive(target_speaker.to_string()))?;
    let mut flags = Vec::new();

    let selected = if audio.num_channels() > 1 {
        let ev = EvConfig {
            keep_fraction: cfg.keep_fraction,
            ..cfg.ev
        };
        select_channels(&envelope_variance_scores(audio, &ev)?, cfg.keep_fraction)
    } else {
        vec![0]
    };
    let x = audio.select_channels(&selected)?;
    let spec = stft(&x, &cfg.stft)?;
    let spec = wpe(&spec, &cfg.wpe)?;

    let masks = if spec.num_channels() >= 2 {
        fit_guided_cacgmm(&spec, &grid, target_speaker, &cfg.cacgmm)?
    } else {
        prior_masks(&grid, target_index, spec.num_bins())
    };
    let target = masks.target();
    let undesired = masks.undesired();

    // Beamformer statistics come from the core frames only.
    let frames = core.frames.clone();
    let core_spec = spec.slice_frames(frames.clone())?;
    let core_target = target.slice(s![frames.clone(), ..]);
    let core_noise = undesired.slice(s![frames.clone(), ..]);
    let phi_s = scm_from_mask(&core_spec, core_target)?;
    let phi_n = scm_from_mask(&core_spec, core_noise)?;
    flag_bins(&mut flags, "speech covariance fallback", &phi_s.fallback_bins);
    flag_bins(&mut flags, "noise covariance fallback", &phi_n.fallback_bins);
    let reference = select_reference_channel(&phi_s, &phi_n)?;
    let mvdr = mvdr_souden(&phi_s, &phi_n, reference)?;
    flag_bins(&mut flags, "mvdr fallback", &mvdr.fallback_bins);
    let mut y = apply_beamformer(&mvdr, &spec)?;

    match cfg.variant {
        Variant::Gss => {}
        Variant::GssPostfilter => {
            let m = match postfilter {
                Postfilter::Target => target.clone(),
                Postfilter::Unit => Array2::ones(target.dim()),
            };
            y = mask_postfilter(&y, m.view())?;
        }
        Variant::CwmwfCban => {
            let y_core = y.slice_frames(frames.clone())?;
            let d = steering_from_beamformed(&core_spec, &y_core, reference)?;
            flag_bins(&mut flags, "steering fallback", &d.fallback_bins);
            let stacked = stack_taps(&spec, cfg.taps)?.slice_frames(frames.clone())?;
            let phi_n_conv = scm_from_mask(&stacked, core_noise)?;
            let psd = output_psd(&y, frames.clone());
            let w = cwmwf(&d, &phi_n_conv, cfg.taps, &psd)?;
            flag_bins(&mut flags, "cwmwf extra loading", &w.fallback_bins);
            let gain = ban_gain(&w, &phi_n_conv)?;
            flag_bins(&mut flags, "cban fallback", &gain.fallback_bins);
            y = apply_gain(&apply_beamformer(&w, &spec)?, &gain)?;
        }
    }

    let full = istft(&y, &cfg.stft, audio.len())?;
    let core_wave = Waveform {
        samples: full.data().slice(s![0, core.samples.clone()]).to_vec(),
        sample_rate: audio.sample_rate(),
    };
    let waveform = peak_normalize(&core_wave);
    if waveform != core_wave {
        flags.push(format!("peak normalized from {:.3}", core_wave.peak()));
    }
    Ok(EnhanceOutput {
        waveform,
        spectrum: y,
        reference_channel: selected[reference],
        selected_channels: selected,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentStatus {
    Ok,
    Failed,
}

/// One line of the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub session_id: String,
    pub utt_id: String,
    pub speaker: String,
    pub status: SegmentStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub seconds: f64,
    pub selected_channels: Vec<usize>,
    pub reference_channel: Option<usize>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub variant: Variant,
    pub seed: u64,
    pub segments: Vec<SegmentReport>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.segments.iter().filter(|s| s.status == SegmentStatus::Failed).count()
    }

    pub fn to_jsonl(&self) -> String {
        self.segments
            .iter()
            .map(|s| serde_json::to_string(s).expect("report entries serialize") + "\n")
            .collect()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn enhance_one(
    m: &SessionManifest,
    audio: &MultichannelWaveform,
    utt_id: &str,
    cfg: &PipelineConfig,
    session_dir: &Path,
) -> Result<(PathBuf, EnhanceOutput)> {
    let cut = cut_segment_with_context(m, audio, utt_id, cfg.context_secs, &cfg.stft)?;
    let out = enhance_cut(&cut, cfg)?;
    let path = session_dir.join(format!("{utt_id}.wav"));
    write_wav(&path, &MultichannelWaveform::from_mono(out.waveform.clone()), BitDepth::Pcm16)?;
    Ok((path, out))
}

/// Name of the JSON-lines run report written next to the enhanced files.
pub const REPORT_FILE: &str = "report.jsonl";

/// Enhances every segment of `m` into `<out_dir>/<session>/<utt_id>.wav`
/// using `workers` threads and writes the report to
/// `<out_dir>/<session>/report.jsonl`. Segment failures are recorded, not raised;
/// errors are returned only when the session itself cannot be processed.
pub fn enhance_manifest(
    m: &SessionManifest,
    cfg: &PipelineConfig,
    out_dir: impl AsRef<Path>,
    workers: usize,
) -> Result<RunReport> {
    cfg.validate()?;
    m.validate()?;
    let session_dir = out_dir.as_ref().join(&m.session_id);
    std::fs::create_dir_all(&session_dir).map_err(|source| Error::Io {
        path: session_dir.clone(),
        source,
    })?;
    let report_path = session_dir.join(REPORT_FILE);
    if m.segments.is_empty() {
        let report = RunReport {
            variant: cfg.variant,
            seed: cfg.seed,
            segments: Vec::new(),
        };
        report.write_jsonl(&report_path)?;
        return Ok(report);
    }
    let audio = load_session_audio(m, PROCESSING_RATE)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let segments = pool.install(|| {
        m.segments
            .par_iter()
            .map(|seg| {
                let started = Instant::now();
                let res = enhance_one(m, &audio, &seg.utt_id, cfg, &session_dir);
                let seconds = started.elapsed().as_secs_f64();
                let mut report = SegmentReport {
                    session_id: m.session_id.clone(),
                    utt_id: seg.utt_id.clone(),
                    speaker: seg.speaker_id.clone(),
                    status: SegmentStatus::Ok,
                    error: None,
                    output: None,
                    seconds,
                    selected_channels: Vec::new(),
                    reference_channel: None,
                    flags: Vec::new(),
                };
                match res {
                    Ok((path, out)) => {
                        report.output = Some(path);
                        report.selected_channels = out.selected_channels;
                        report.reference_channel = Some(out.reference_channel);
                        report.flags = out.flags;
                    }
                    Err(e) => {
                        log::warn!("{}/{}: {e}", m.session_id, seg.utt_id);
                        report.status = SegmentStatus::Failed;
                        report.error = Some(e.to_string());
                    }
                }
                report
            })
            .collect()
    });
    let report = RunReport {
        variant: cfg.variant,
        seed: cfg.seed,
        segments,
    };
    report.write_jsonl(&report_path)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names() {
        for v in [Variant::Gss, Variant::GssPostfilter, Variant::CwmwfCban] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("gss_postfilter".parse::<Variant>().unwrap(), Variant::GssPostfilter);
        assert!("mvdr".parse::<Variant>().is_err());
    }

    #[test]
    fn variant_context_defaults() {
        assert_eq!(PipelineConfig::new(Variant::Gss).context_secs, 15.0);
        assert_eq!(PipelineConfig::new(Variant::GssPostfilter).context_secs, 15.0);
        assert_eq!(PipelineConfig::new(Variant::CwmwfCban).context_secs, 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        cfg.context_secs = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::new(Variant::CwmwfCban);
        cfg.taps = 0;
        assert!(cfg.validate().is_err());
    }
}
