//! Python bindings. Audio crosses the boundary as float64 numpy arrays shaped
//! `(channels, samples)`; spectra as complex128 arrays shaped
//! `(channels, frames, bins)`.

use std::path::PathBuf;

use farfield_core::audio::{self, StftConfig as CoreStft};
use farfield_core::augment::{self, Codec, MixConfig};
use farfield_core::beamform::mask_based_mvdr;
use farfield_core::channel_select::{envelope_variance_scores, EvConfig};
use farfield_core::dereverb::{self, WpeConfig};
use farfield_core::fusion;
use farfield_core::manifest::{self, ActivityGrid, SegmentAnnotation, SessionManifest};
use farfield_core::mask_model::{fit_guided_cacgmm, CacgmmConfig};
use farfield_core::pipeline::{self, PipelineConfig, Variant};
use farfield_core::{metrics, MultichannelWaveform, Spectrogram, Waveform};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use numpy::{IntoPyArray, PyArray1, PyArray2, PyArray3, PyReadonlyArray1, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(farfield, FarfieldError, PyException);

fn err(e: farfield_core::Error) -> PyErr {
    FarfieldError::new_err(e.to_string())
}

fn variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(err)
}

/// STFT parameters; Hann window.
#[pyclass(module = "farfield", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct StftConfig {
    window_length: usize,
    hop: usize,
    fft_size: usize,
}

#[pymethods]
impl StftConfig {
    #[new]
    #[pyo3(signature = (window_length=1024, hop=256, fft_size=1024))]
    fn new(window_length: usize, hop: usize, fft_size: usize) -> PyResult<Self> {
        let c = Self {
            window_length,
            hop,
            fft_size,
        };
        c.core().validate().map_err(err)?;
        Ok(c)
    }

    #[getter]
    fn num_bins(&self) -> usize {
        self.core().num_bins()
    }

    fn __repr__(&self) -> String {
        format!(
            "StftConfig(window_length={}, hop={}, fft_size={})",
            self.window_length, self.hop, self.fft_size
        )
    }
}

impl StftConfig {
    fn core(&self) -> CoreStft {
        CoreStft {
            window_length: self.window_length,
            hop: self.hop,
            fft_size: self.fft_size,
            ..CoreStft::default()
        }
    }
}

fn stft_cfg(c: Option<PyRef<'_, StftConfig>>) -> CoreStft {
    c.map_or_else(CoreStft::default, |c| c.core())
}

/// Shoebox room with one source and one microphone.
#[pyclass(module = "farfield", skip_from_py_object)]
#[derive(Clone)]
struct RoomSpec {
    inner: augment::RoomSpec,
}

#[pymethods]
impl RoomSpec {
    #[new]
    #[pyo3(signature = (width, length, height, beta, source_pos, mic_pos, c=augment::SPEED_OF_SOUND))]
    fn new(
        width: f64,
        length: f64,
        height: f64,
        beta: [f64; 6],
        source_pos: [f64; 3],
        mic_pos: [f64; 3],
        c: f64,
    ) -> PyResult<Self> {
        let inner = augment::RoomSpec {
            width,
            length,
            height,
            beta,
            source_pos,
            mic_pos,
            c,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    /// Room drawn from the augmentation ranges.
    #[staticmethod]
    fn sample(seed: u64) -> Self {
        Self {
            inner: augment::sample_room(seed),
        }
    }

    #[getter]
    fn width(&self) -> f64 {
        self.inner.width
    }
    #[getter]
    fn length(&self) -> f64 {
        self.inner.length
    }
    #[getter]
    fn height(&self) -> f64 {
        self.inner.height
    }
    #[getter]
    fn beta(&self) -> [f64; 6] {
        self.inner.beta
    }
    #[getter]
    fn source_pos(&self) -> [f64; 3] {
        self.inner.source_pos
    }
    #[getter]
    fn mic_pos(&self) -> [f64; 3] {
        self.inner.mic_pos
    }
    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    fn direct_distance(&self) -> f64 {
        self.inner.direct_distance()
    }

    /// Image-method impulse response of `length` samples at `fs`.
    fn rir<'py>(&self, py: Python<'py>, fs: u32, length: usize) -> PyResult<Bound<'py, PyArray1<f64>>> {
        let room = self.inner.clone();
        let h = py.detach(|| augment::simulate_rir(&room, fs, length)).map_err(err)?;
        Ok(h.samples.into_pyarray(py))
    }

    fn __repr__(&self) -> String {
        let r = &self.inner;
        format!(
            "RoomSpec(width={:.3}, length={:.3}, height={:.3}, beta={:?})",
            r.width, r.length, r.height, r.beta
        )
    }
}

/// Session manifest: channel WAV paths and annotated segments.
#[pyclass(module = "farfield", skip_from_py_object)]
#[derive(Clone)]
struct Manifest {
    inner: SessionManifest,
}

#[pymethods]
impl Manifest {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: manifest::load_session_manifest(path).map_err(err)?,
        })
    }

    #[getter]
    fn session_id(&self) -> &str {
        &self.inner.session_id
    }

    #[getter]
    fn channels(&self) -> Vec<PathBuf> {
        self.inner.channel_paths.clone()
    }

    /// `(utt_id, speaker, start, end, group)` tuples.
    #[getter]
    fn segments(&self) -> Vec<(String, String, f64, f64, String)> {
        self.inner
            .segments
            .iter()
            .map(|s| (s.utt_id.clone(), s.speaker_id.clone(), s.start, s.end, s.group_key.clone()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.segments.len()
    }
}

fn waveform(x: &PyReadonlyArray2<'_, f64>, fs: u32) -> PyResult<MultichannelWaveform> {
    MultichannelWaveform::new(x.as_array().to_owned(), fs).map_err(err)
}

fn mono(x: &PyReadonlyArray1<'_, f64>, fs: u32) -> PyResult<Waveform> {
    Waveform::new(x.as_array().to_vec(), fs).map_err(err)
}

fn spectrogram(s: &PyReadonlyArray3<'_, Complex64>, cfg: CoreStft, fs: u32) -> PyResult<Spectrogram> {
    Spectrogram::new(s.as_array().to_owned(), cfg, fs).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (x, fs=16000, config=None))]
fn stft<'py>(
    py: Python<'py>,
    x: PyReadonlyArray2<'py, f64>,
    fs: u32,
    config: Option<PyRef<'py, StftConfig>>,
) -> PyResult<Bound<'py, PyArray3<Complex64>>> {
    let w = waveform(&x, fs)?;
    let cfg = stft_cfg(config);
    let s = py.detach(|| audio::stft(&w, &cfg)).map_err(err)?;
    Ok(s.data.into_pyarray(py))
}

#[pyfunction]
#[pyo3(signature = (spec, length, fs=16000, config=None))]
fn istft<'py>(
    py: Python<'py>,
    spec: PyReadonlyArray3<'py, Complex64>,
    length: usize,
    fs: u32,
    config: Option<PyRef<'py, StftConfig>>,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let cfg = stft_cfg(config);
    let s = spectrogram(&spec, cfg, fs)?;
    let w = py.detach(|| audio::istft(&s, &cfg, length)).map_err(err)?;
    Ok(w.into_data().into_pyarray(py))
}

/// Multichannel WPE dereverberation of a spectrogram.
#[pyfunction]
#[pyo3(signature = (spec, taps=10, delay=2, iterations=3))]
fn wpe<'py>(
    py: Python<'py>,
    spec: PyReadonlyArray3<'py, Complex64>,
    taps: usize,
    delay: usize,
    iterations: usize,
) -> PyResult<Bound<'py, PyArray3<Complex64>>> {
    // frame geometry is irrelevant to WPE
    let s = spectrogram(&spec, single_frame_cfg(spec.as_array().dim().2), 16_000)?;
    let cfg = WpeConfig {
        taps,
        delay,
        iterations,
        ..WpeConfig::default()
    };
    let y = py.detach(|| dereverb::wpe(&s, &cfg)).map_err(err)?;
    Ok(y.data.into_pyarray(py))
}

/// A config whose bin count matches `bins`, for ops that only need the shape.
fn single_frame_cfg(bins: usize) -> CoreStft {
    let fft = 2 * bins.saturating_sub(1).max(1);
    CoreStft {
        window_length: fft,
        hop: fft,
        fft_size: fft,
        ..CoreStft::default()
    }
}

/// Envelope-variance score per channel; higher means less reverberant.
#[pyfunction]
#[pyo3(signature = (x, fs=16000))]
fn channel_scores(py: Python<'_>, x: PyReadonlyArray2<'_, f64>, fs: u32) -> PyResult<Vec<f64>> {
    let w = waveform(&x, fs)?;
    py.detach(|| envelope_variance_scores(&w, &EvConfig::default())).map_err(err)
}

/// Guided CACGMM posteriors, shaped `(speakers + 1, frames, bins)`; the last
/// class is noise. `activity` is `(speakers, frames)`.
#[pyfunction]
#[pyo3(signature = (spec, activity, target, iterations=20))]
fn guided_masks<'py>(
    py: Python<'py>,
    spec: PyReadonlyArray3<'py, Complex64>,
    activity: PyReadonlyArray2<'py, bool>,
    target: usize,
    iterations: usize,
) -> PyResult<Bound<'py, PyArray3<f64>>> {
    let cfg = single_frame_cfg(spec.as_array().dim().2);
    let s = spectrogram(&spec, cfg, 16_000)?;
    let activity = activity.as_array().to_owned();
    let speakers: Vec<String> = (0..activity.nrows()).map(|k| k.to_string()).collect();
    let target = speakers
        .get(target)
        .cloned()
        .ok_or_else(|| FarfieldError::new_err(format!("target {target} out of range")))?;
    let grid = ActivityGrid {
        speakers,
        activity,
        config: cfg,
    };
    let em = CacgmmConfig {
        iterations,
        ..CacgmmConfig::default()
    };
    let masks = py.detach(|| fit_guided_cacgmm(&s, &grid, &target, &em)).map_err(err)?;
    Ok(masks.gamma.into_pyarray(py))
}

/// Mask-based MVDR; returns the beamformed `(frames, bins)` spectrum and the
/// chosen reference channel.
#[pyfunction]
fn mvdr<'py>(
    py: Python<'py>,
    spec: PyReadonlyArray3<'py, Complex64>,
    speech_mask: PyReadonlyArray2<'py, f64>,
    noise_mask: PyReadonlyArray2<'py, f64>,
) -> PyResult<(Bound<'py, PyArray2<Complex64>>, usize)> {
    let s = spectrogram(&spec, single_frame_cfg(spec.as_array().dim().2), 16_000)?;
    let (ms, mn) = (speech_mask.as_array().to_owned(), noise_mask.as_array().to_owned());
    let out = py.detach(|| mask_based_mvdr(&s, ms.view(), mn.view())).map_err(err)?;
    let y: Array2<Complex64> = out.output.data.index_axis_move(ndarray::Axis(0), 0);
    Ok((y.into_pyarray(py), out.weights.ref_channel))
}

/// Enhances one segment of an in-memory recording. `segments` holds
/// `(utt_id, speaker, start, end)` tuples covering every talker.
#[pyfunction]
#[pyo3(signature = (x, segments, utt_id, fs=16000, variant="gss", context_secs=None))]
fn enhance_segment<'py>(
    py: Python<'py>,
    x: PyReadonlyArray2<'py, f64>,
    segments: Vec<(String, String, f64, f64)>,
    utt_id: &str,
    fs: u32,
    variant: &str,
    context_secs: Option<f64>,
) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let w = waveform(&x, fs)?;
    let v = self::variant(variant)?;
    let cfg = PipelineConfig {
        context_secs: context_secs.unwrap_or(v.default_context_secs()),
        ..PipelineConfig::new(v)
    };
    let m = SessionManifest {
        session_id: "memory".into(),
        channel_paths: (0..w.num_channels()).map(|c| PathBuf::from(format!("ch{c}"))).collect(),
        segments: segments
            .into_iter()
            .map(|(utt_id, speaker_id, start, end)| SegmentAnnotation {
                utt_id,
                speaker_id,
                start,
                end,
                group_key: String::new(),
            })
            .collect(),
    };
    let out = py
        .detach(|| {
            let cut = manifest::cut_segment_with_context(&m, &w, utt_id, cfg.context_secs, &cfg.stft)?;
            pipeline::enhance_cut(&cut, &cfg)
        })
        .map_err(err)?;
    Ok(out.waveform.samples.into_pyarray(py))
}

/// Runs the batch pipeline over a manifest file and returns the report
/// lines as dicts.
#[pyfunction]
#[pyo3(signature = (manifest, out_dir, variant="gss", context_secs=None, keep_fraction=0.8, taps=5, workers=1, seed=0))]
#[allow(clippy::too_many_arguments)]
fn enhance_manifest<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    out_dir: PathBuf,
    variant: &str,
    context_secs: Option<f64>,
    keep_fraction: f64,
    taps: usize,
    workers: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let v = self::variant(variant)?;
    let cfg = PipelineConfig {
        context_secs: context_secs.unwrap_or(v.default_context_secs()),
        keep_fraction,
        taps,
        seed,
        ..PipelineConfig::new(v)
    };
    let report = py
        .detach(|| {
            let m = manifest::load_session_manifest(&manifest)?;
            pipeline::enhance_manifest(&m, &cfg, &out_dir, workers)
        })
        .map_err(err)?;
    let json = py.import("json")?;
    report
        .to_jsonl()
        .lines()
        .map(|l| json.call_method1("loads", (l,)))
        .collect()
}

/// Background-speaker mixing; returns a dict with the mixture and the draw.
#[pyfunction]
#[pyo3(signature = (primary, background, rir_primary, rir_background, fs=16000, snr_low=5.0, snr_high=12.0, pad_secs=4.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn mix_background_speaker<'py>(
    py: Python<'py>,
    primary: PyReadonlyArray1<'py, f64>,
    background: PyReadonlyArray1<'py, f64>,
    rir_primary: PyReadonlyArray1<'py, f64>,
    rir_background: PyReadonlyArray1<'py, f64>,
    fs: u32,
    snr_low: f64,
    snr_high: f64,
    pad_secs: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let (p, b) = (mono(&primary, fs)?, mono(&background, fs)?);
    let (rp, rb) = (mono(&rir_primary, fs)?, mono(&rir_background, fs)?);
    let cfg = MixConfig {
        snr_db_range: [snr_low, snr_high],
        pad_secs,
        codec_prob: 0.0,
        seed,
    };
    let out = py
        .detach(|| augment::mix_background_speaker(&p, &b, &rp, &rb, &cfg))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mixture", out.mixture.samples.into_pyarray(py))?;
    d.set_item("primary", out.primary.samples.into_pyarray(py))?;
    d.set_item("background", out.background.samples.into_pyarray(py))?;
    d.set_item("snr_db", out.snr_db)?;
    d.set_item("offset", out.offset)?;
    d.set_item("gain", out.gain)?;
    Ok(d)
}

/// Codec round trip: "ulaw", "alaw", or a shell command reading and
/// writing WAV on stdin/stdout.
#[pyfunction]
#[pyo3(signature = (x, codec, fs=16000))]
fn apply_codec<'py>(
    py: Python<'py>,
    x: PyReadonlyArray1<'py, f64>,
    codec: &str,
    fs: u32,
) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let w = mono(&x, fs)?;
    let c = match codec {
        "ulaw" => Codec::G711Ulaw,
        "alaw" => Codec::G711Alaw,
        cmd => Codec::External(cmd.to_string()),
    };
    let y = py.detach(|| augment::apply_codec(&w, &c)).map_err(err)?;
    Ok(y.samples.into_pyarray(py))
}

#[pyfunction]
fn speed_perturb<'py>(
    py: Python<'py>,
    x: PyReadonlyArray1<'py, f64>,
    factor: f64,
    fs: u32,
) -> PyResult<Bound<'py, PyArray1<f64>>> {
    let w = mono(&x, fs)?;
    let y = py.detach(|| augment::speed_perturb(&w, factor)).map_err(err)?;
    Ok(Array1::from(y.samples).into_pyarray(py))
}

/// Confusion network of weighted hypotheses: one list of
/// `(word or None, confidence)` arcs per slot.
#[pyfunction]
fn hystoc(hyps: Vec<(Vec<String>, f64)>) -> PyResult<Vec<Vec<(Option<String>, f64)>>> {
    let cn = fusion::hystoc_confusion_network(&hyps).map_err(err)?;
    Ok(cn
        .slots
        .into_iter()
        .map(|s| s.arcs.into_iter().map(|a| (a.word, a.confidence)).collect())
        .collect())
}

/// ROVER over systems given as `(word, confidence)` sequences.
#[pyfunction]
#[pyo3(signature = (systems, alpha=0.8, null_conf=0.4))]
fn rover(systems: Vec<Vec<(String, f64)>>, alpha: f64, null_conf: f64) -> PyResult<Vec<(String, f64)>> {
    let inputs: Vec<Vec<fusion::ScoredWord>> = systems
        .into_iter()
        .map(|s| s.into_iter().map(|(t, c)| fusion::ScoredWord::new(t, c)).collect())
        .collect();
    let out = fusion::rover(&inputs, &fusion::RoverConfig { alpha, null_conf }).map_err(err)?;
    Ok(out.into_iter().map(|w| (w.token, w.confidence)).collect())
}

/// Word error counts as a dict.
#[pyfunction]
fn wer<'py>(py: Python<'py>, reference: Vec<String>, hyp: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
    let r = fusion::wer(&reference, &hyp);
    let d = PyDict::new(py);
    d.set_item("substitutions", r.substitutions)?;
    d.set_item("deletions", r.deletions)?;
    d.set_item("insertions", r.insertions)?;
    d.set_item("reference_words", r.reference_words)?;
    d.set_item("wer", r.wer)?;
    Ok(d)
}

#[pyfunction]
fn si_sdr(estimate: PyReadonlyArray1<'_, f64>, reference: PyReadonlyArray1<'_, f64>) -> PyResult<f64> {
    let (e, r) = (estimate.as_array(), reference.as_array());
    metrics::si_sdr(&e.to_vec(), &r.to_vec()).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (path))]
fn read_wav<'py>(py: Python<'py>, path: PathBuf) -> PyResult<(Bound<'py, PyArray2<f64>>, u32)> {
    let w = audio::read_wav(path).map_err(err)?;
    let fs = w.sample_rate();
    Ok((w.into_data().into_pyarray(py), fs))
}

/// Writes float32 WAV.
#[pyfunction]
#[pyo3(signature = (path, x, fs=16000))]
fn write_wav(path: PathBuf, x: PyReadonlyArray2<'_, f64>, fs: u32) -> PyResult<()> {
    let w = waveform(&x, fs)?;
    audio::write_wav(path, &w, audio::BitDepth::Float32).map_err(err)
}

#[pymodule]
fn farfield(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FarfieldError", m.py().get_type::<FarfieldError>())?;
    m.add_class::<StftConfig>()?;
    m.add_class::<RoomSpec>()?;
    m.add_class::<Manifest>()?;
    m.add_function(wrap_pyfunction!(stft, m)?)?;
    m.add_function(wrap_pyfunction!(istft, m)?)?;
    m.add_function(wrap_pyfunction!(wpe, m)?)?;
    m.add_function(wrap_pyfunction!(channel_scores, m)?)?;
    m.add_function(wrap_pyfunction!(guided_masks, m)?)?;
    m.add_function(wrap_pyfunction!(mvdr, m)?)?;
    m.add_function(wrap_pyfunction!(enhance_segment, m)?)?;
    m.add_function(wrap_pyfunction!(enhance_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(mix_background_speaker, m)?)?;
    m.add_function(wrap_pyfunction!(apply_codec, m)?)?;
    m.add_function(wrap_pyfunction!(speed_perturb, m)?)?;
    m.add_function(wrap_pyfunction!(hystoc, m)?)?;
    m.add_function(wrap_pyfunction!(rover, m)?)?;
    m.add_function(wrap_pyfunction!(wer, m)?)?;
    m.add_function(wrap_pyfunction!(si_sdr, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    Ok(())
}
