use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use farfield_core::audio::{read_wav, resample, write_wav, BitDepth};
use farfield_core::augment::{maybe_apply_codec, mix_background_speaker, sample_room, simulate_rir, Codec, MixConfig};
use farfield_core::fusion::{
    format_ctm, nbest_to_ctm, parse_ctm, parse_nbest, parse_trn, rover_ctm, score_trn, RoverConfig,
};
use farfield_core::manifest::load_session_manifest;
use farfield_core::pipeline::{enhance_manifest, PipelineConfig, Variant, REPORT_FILE};
use farfield_core::{MultichannelWaveform, Waveform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

#[derive(Error, Debug)]
enum CliError {
    #[error(transparent)]
    Core(#[from] farfield_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "farfield", version, about = "Far-field speech enhancement, augmentation and hypothesis fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance every segment of a session manifest.
    Enhance(EnhanceArgs),
    /// Write image-method RIRs for randomly sampled rooms.
    SimulateRir(SimulateRirArgs),
    /// Data augmentation.
    #[command(subcommand)]
    Augment(AugmentCommand),
    /// Hypothesis fusion.
    #[command(subcommand)]
    Fuse(FuseCommand),
    /// Word error rate of a TRN hypothesis file.
    Score(ScoreArgs),
}

#[derive(Args)]
struct EnhanceArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "gss", value_parser = parse_variant)]
    variant: Variant,
    /// Context on each side of the segment; 15 s, or 1 s for cwmwf-cban.
    #[arg(long)]
    context_secs: Option<f64>,
    #[arg(long, default_value_t = 0.8)]
    keep_fraction: f64,
    /// Filter length in frames for cwmwf-cban.
    #[arg(long, default_value_t = 5)]
    taps: usize,
    /// Segments processed in parallel; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateRirArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16_000)]
    fs: u32,
    #[arg(long, default_value_t = 500.0)]
    len_ms: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AugmentCommand {
    /// Insert a background speaker at a random SNR, optionally through a codec.
    Mix(MixArgs),
}

#[derive(Args)]
struct MixArgs {
    #[arg(long)]
    primary: PathBuf,
    #[arg(long)]
    background: PathBuf,
    /// RIR applied to the primary; none leaves it dry.
    #[arg(long)]
    rir_primary: Option<PathBuf>,
    /// RIR applied to the background; none leaves it dry.
    #[arg(long)]
    rir_background: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    snr_low: f64,
    #[arg(long, default_value_t = 12.0)]
    snr_high: f64,
    #[arg(long, default_value_t = 4.0)]
    pad_secs: f64,
    #[arg(long, default_value_t = 1.0 / 7.0)]
    codec_prob: f64,
    /// Extra codec: a shell command reading WAV on stdin and writing WAV on stdout.
    #[arg(long)]
    codec_cmd: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum FuseCommand {
    /// N-best lists to CTM with confusion-network word confidences.
    Hystoc(HystocArgs),
    /// Combine CTM files by confidence-weighted voting.
    Rover(RoverArgs),
}

#[derive(Args)]
struct HystocArgs {
    #[arg(long)]
    nbest: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Scores are probabilities rather than log-probabilities.
    #[arg(long)]
    scores_are_probs: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RoverArgs {
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long, default_value_t = 0.4)]
    null_conf: f64,
    #[arg(required = true)]
    ctms: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: farfield_core::Error| e.to_string())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// First channel of a WAV file at `rate` (the file's own rate when `None`).
fn read_mono(path: &Path, rate: Option<u32>) -> Result<Waveform> {
    let w = read_wav(path)?;
    if w.num_channels() > 1 {
        log::warn!("{}: using the first of {} channels", path.display(), w.num_channels());
    }
    let mono = w.channel(0);
    Ok(match rate {
        Some(r) if r != mono.sample_rate => resample(&mono, r)?,
        _ => mono,
    })
}

fn enhance(a: EnhanceArgs) -> Result<ExitCode> {
    let m = load_session_manifest(&a.manifest)?;
    let cfg = PipelineConfig {
        context_secs: a.context_secs.unwrap_or(a.variant.default_context_secs()),
        keep_fraction: a.keep_fraction,
        taps: a.taps,
        seed: a.seed,
        ..PipelineConfig::new(a.variant)
    };
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let report = enhance_manifest(&m, &cfg, &a.out, workers)?;
    let failed = report.failures();
    eprintln!(
        "{}: {} of {} segments enhanced, report in {}",
        m.session_id,
        report.segments.len() - failed,
        report.segments.len(),
        a.out.join(&m.session_id).join(REPORT_FILE).display()
    );
    Ok(if failed > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn simulate_rirs(a: SimulateRirArgs) -> Result<ExitCode> {
    if !(a.len_ms > 0.0) {
        return Err(CliError::Usage("--len-ms must be positive".into()));
    }
    create_dir(&a.out)?;
    let len = (a.len_ms * a.fs as f64 / 1000.0).round() as usize;
    let mut rooms = String::new();
    for i in 0..a.count {
        // distinct, reproducible room per index
        let room = sample_room(a.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64));
        let h = simulate_rir(&room, a.fs, len)?;
        let name = format!("rir_{i:05}.wav");
        write_wav(a.out.join(&name), &MultichannelWaveform::from_mono(h), BitDepth::Float32)?;
        rooms.push_str(&json!({"file": name, "room": room}).to_string());
        rooms.push('\n');
    }
    write_text(&a.out.join("rooms.jsonl"), &rooms)?;
    Ok(ExitCode::SUCCESS)
}

fn augment_mix(a: MixArgs) -> Result<ExitCode> {
    let primary = read_mono(&a.primary, None)?;
    let rate = Some(primary.sample_rate);
    let background = read_mono(&a.background, rate)?;
    let identity = Waveform::new(vec![1.0], primary.sample_rate)?;
    let rir = |p: &Option<PathBuf>| p.as_deref().map_or(Ok(identity.clone()), |p| read_mono(p, rate));
    let (rir_p, rir_b) = (rir(&a.rir_primary)?, rir(&a.rir_background)?);
    let cfg = MixConfig {
        snr_db_range: [a.snr_low, a.snr_high],
        pad_secs: a.pad_secs,
        codec_prob: a.codec_prob,
        seed: a.seed,
    };
    let mixed = mix_background_speaker(&primary, &background, &rir_p, &rir_b, &cfg)?;
    let mut codecs = vec![Codec::G711Ulaw, Codec::G711Alaw];
    codecs.extend(a.codec_cmd.clone().map(Codec::External));
    // separate stream from the mixer's so codec choice never shifts the mix
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0xc0de_c0de);
    let (out, codec) = maybe_apply_codec(&mixed.mixture, &codecs, cfg.codec_prob, &mut rng)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_wav(&a.out, &MultichannelWaveform::from_mono(out), BitDepth::Float32)?;
    let meta = json!({
        "primary": a.primary,
        "background": a.background,
        "snr_db": mixed.snr_db,
        "offset": mixed.offset,
        "gain": mixed.gain,
        "codec": codec,
        "seed": a.seed,
    });
    write_text(&a.out.with_extension("json"), &format!("{meta}\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn fuse_hystoc(a: HystocArgs) -> Result<ExitCode> {
    let lists = parse_nbest(&read_text(&a.nbest)?)?;
    let mut records = Vec::new();
    for l in &lists {
        records.extend(nbest_to_ctm(l, a.temperature, a.scores_are_probs)?);
    }
    write_text(&a.out, &format_ctm(&records))?;
    Ok(ExitCode::SUCCESS)
}

fn fuse_rover(a: RoverArgs) -> Result<ExitCode> {
    let cfg = RoverConfig {
        alpha: a.alpha,
        null_conf: a.null_conf,
    };
    cfg.validate()?;
    let systems = a
        .ctms
        .iter()
        .map(|p| Ok(parse_ctm(&read_text(p)?)?))
        .collect::<Result<Vec<_>>>()?;
    write_text(&a.out, &format_ctm(&rover_ctm(&systems, &cfg)?))?;
    Ok(ExitCode::SUCCESS)
}

fn score(a: ScoreArgs) -> Result<ExitCode> {
    let reference = parse_trn(&read_text(&a.reference)?)?;
    let hyp = parse_trn(&read_text(&a.hyp)?)?;
    let (per, total) = score_trn(&reference, &hyp)?;
    for (utt, r) in &per {
        println!(
            "{utt}\tS={} D={} I={} N={}\tWER={:.2}%",
            r.substitutions,
            r.deletions,
            r.insertions,
            r.reference_words,
            100.0 * r.wer
        );
    }
    println!(
        "TOTAL\tS={} D={} I={} N={}\tWER={:.2}%",
        total.substitutions,
        total.deletions,
        total.insertions,
        total.reference_words,
        100.0 * total.wer
    );
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Enhance(a) => enhance(a),
        Command::SimulateRir(a) => simulate_rirs(a),
        Command::Augment(AugmentCommand::Mix(a)) => augment_mix(a),
        Command::Fuse(FuseCommand::Hystoc(a)) => fuse_hystoc(a),
        Command::Fuse(FuseCommand::Rover(a)) => fuse_rover(a),
        Command::Score(a) => score(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

