//! Command-line frontend for the presence gate: generate labeled synthetic
//! traces, calibrate the detection threshold, replay recorded traces
//! offline, run the live daemon loop, and inspect trace files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use csigate::config::{self, AppConfig};
use csigate::detect::{calibrate_threshold, calibration_report, CalibrationOutcome, SessionStats};
use csigate::live::{run_live, FrameSource, LiveOptions, ReplayLoopSource, SyntheticSource};
use csigate::replay::{run_replay, score_sessions};
use csigate::synth::{standard_scenarios, synthesize_schedule, ScenarioPreset};
use csigate::trace::{
    csi_amplitude_streams, read_labels, read_trace, write_labels, write_trace, CsiStream,
    LabelKind, LabelRecord, MotionKind, SessionLabel,
};

#[derive(Parser)]
#[command(
    name = "csigate",
    version,
    about = "WiFi-CSI physical-presence gate",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic CSI trace for a named scenario
    Synth(SynthArgs),
    /// Derive the detection threshold from labeled indoor/outdoor traces
    Calibrate(CalibrateArgs),
    /// Replay a recorded trace offline and summarize detections
    Replay(ReplayArgs),
    /// Run the daemon loop against a looping or synthetic frame source
    Run(RunArgs),
    /// Print a trace header, amplitude statistics, and labels
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario preset (no-motion, indoor-wave, indoor-sit, indoor-jump,
    /// outdoor-wave, outdoor-sit, outdoor-jump)
    scenario: String,
    /// Active-session length in seconds, after the quiet lead
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    /// Quiet lead in seconds; must cover detector warm-up
    #[arg(long, default_value_t = 6.0)]
    lead: f64,
    /// Frame rate in Hz
    #[arg(long, default_value_t = 50.0)]
    rate: f64,
    /// Override the preset's RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Split the session into this many bursts separated by quiet gaps
    #[arg(long, default_value_t = 0)]
    bursts: u32,
    /// Burst length in seconds (with --bursts)
    #[arg(long, default_value_t = 4.0)]
    burst: f64,
    /// Quiet gap between bursts in seconds (with --bursts)
    #[arg(long, default_value_t = 16.0)]
    gap: f64,
    /// Output trace path; the label sidecar goes to <out>.labels
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Labeled traces with indoor-motion sessions (sidecar <trace>.labels)
    #[arg(long, required = true, num_args = 1..)]
    indoor: Vec<PathBuf>,
    /// Labeled traces with outdoor-motion sessions
    #[arg(long, required = true, num_args = 1..)]
    outdoor: Vec<PathBuf>,
    /// Config file; created if missing, threshold_t written back on success
    #[arg(long)]
    config: PathBuf,
    /// Print the full per-session report
    #[arg(long)]
    report: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Recorded trace to replay
    #[arg(long)]
    trace: PathBuf,
    /// Label sidecar (default: <trace>.labels)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Config file with a calibrated threshold_t
    #[arg(long)]
    config: PathBuf,
    /// Write the event log to this path ("-" for stdout)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SourceKind {
    /// Loop a recorded trace forever, rebasing timestamps each pass
    ReplayLoop,
    /// Generate a preset scenario on the fly (quiet / burst / quiet cycle)
    Synthetic,
}

#[derive(Args)]
struct RunArgs {
    /// Config file with a calibrated threshold_t
    #[arg(long)]
    config: PathBuf,
    /// Frame source kind
    #[arg(long, value_enum)]
    source: SourceKind,
    /// Trace to loop (replay-loop source)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Scenario preset (synthetic source)
    #[arg(long)]
    scenario: Option<String>,
    /// Actuator command template; `{transition}` is replaced with
    /// ENABLE or DISABLE
    #[arg(long)]
    actuator: Option<String>,
    /// Stop after this many frames (otherwise run until killed)
    #[arg(long)]
    max_frames: Option<usize>,
    /// Pacing: 1 = real time, 2 = twice as fast, 0 = unpaced
    #[arg(long, default_value_t = 0.0)]
    speed: f64,
    /// Write the event log to this path ("-" for stdout)
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Trace file to inspect
    #[arg(long)]
    trace: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Replay(args) => cmd_replay(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Inspect(args) => cmd_inspect(&args),
    }
}

/// Sidecar path convention: the trace path with `.labels` appended.
fn labels_path(trace: &Path) -> PathBuf {
    let mut os = trace.as_os_str().to_owned();
    os.push(".labels");
    PathBuf::from(os)
}

fn find_preset(name: &str) -> Result<ScenarioPreset> {
    let presets = standard_scenarios();
    match presets.iter().find(|p| p.name == name) {
        Some(preset) => Ok(preset.clone()),
        None => {
            let names: Vec<&str> = presets.iter().map(|p| p.name).collect();
            bail!("unknown scenario {name:?}; available: {}", names.join(", "));
        }
    }
}

fn read_trace_file(path: &Path) -> Result<CsiStream> {
    let file = File::open(path).with_context(|| format!("cannot open trace {}", path.display()))?;
    read_trace(BufReader::new(file)).with_context(|| format!("reading trace {}", path.display()))
}

fn read_labels_file(path: &Path) -> Result<Vec<LabelRecord>> {
    let file =
        File::open(path).with_context(|| format!("cannot open labels {}", path.display()))?;
    read_labels(BufReader::new(file)).with_context(|| format!("reading labels {}", path.display()))
}

fn load_config(path: &Path, allow_missing: bool) -> Result<AppConfig> {
    if !path.exists() {
        if allow_missing {
            return Ok(AppConfig::default());
        }
        bail!("config file {} does not exist", path.display());
    }
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    config::parse_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Write the event log to `path`, or to stdout when `path` is `-`.
fn emit_log(path: &Path, log: &str) -> Result<()> {
    if path.as_os_str() == "-" {
        print!("{log}");
        return Ok(());
    }
    fs::write(path, log).with_context(|| format!("writing event log {}", path.display()))?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut preset = find_preset(&args.scenario)?;
    if let Some(seed) = args.seed {
        preset.model.seed = seed;
    }
    if args.lead <= 0.0 || args.duration <= 0.0 {
        bail!("--lead and --duration must be positive");
    }

    let quiet = SessionLabel::new(
        LabelKind::NoMotion,
        MotionKind::None,
        preset.label.location_tag.clone(),
    );
    let mut schedule: Vec<(SessionLabel, f64)> = vec![(quiet.clone(), args.lead)];
    if args.bursts == 0 {
        schedule.push((preset.label.clone(), args.duration));
    } else {
        if args.burst <= 0.0 || args.gap <= 0.0 {
            bail!("--burst and --gap must be positive");
        }
        for _ in 0..args.bursts {
            schedule.push((preset.label.clone(), args.burst));
            schedule.push((quiet.clone(), args.gap));
        }
    }

    let (stream, records) = synthesize_schedule(&preset.model, &schedule, args.rate, (1, 1, 30))?;

    let out = File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let bytes = write_trace(&stream, BufWriter::new(out))?;
    let sidecar = labels_path(&args.out);
    let labels_file = File::create(&sidecar)
        .with_context(|| format!("cannot create {}", sidecar.display()))?;
    write_labels(&records, BufWriter::new(labels_file))?;

    println!(
        "wrote {} ({} frames, {} bytes) and {} ({} ranges)",
        args.out.display(),
        stream.frames.len(),
        bytes,
        sidecar.display(),
        records.len()
    );
    Ok(())
}

/// Score one side's calibration traces. Each trace contributes its ranges
/// of the side's motion kind; NO_MOTION ranges (quiet leads) are skipped,
/// and a range labeled for the opposite side is a hard error — the trace
/// was passed under the wrong flag.
fn score_side(paths: &[PathBuf], config: &AppConfig, side: LabelKind) -> Result<Vec<SessionStats>> {
    let opposite = match side {
        LabelKind::IndoorMotion => LabelKind::OutdoorMotion,
        _ => LabelKind::IndoorMotion,
    };
    let mut collected = Vec::new();
    for path in paths {
        let stream = read_trace_file(path)?;
        let labels = read_labels_file(&labels_path(path))?;
        let stats = score_sessions(&stream, &labels, config)
            .with_context(|| format!("scoring {}", path.display()))?;
        let before = collected.len();
        for stat in stats {
            if stat.label.kind == side {
                collected.push(stat);
            } else if stat.label.kind == opposite {
                bail!(
                    "{} contains a {} range but was passed as the {} side",
                    path.display(),
                    opposite,
                    side
                );
            }
        }
        if collected.len() == before {
            bail!("{} has no {} ranges", path.display(), side);
        }
    }
    Ok(collected)
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let mut config = load_config(&args.config, true)?;
    let indoor = score_side(&args.indoor, &config, LabelKind::IndoorMotion)?;
    let outdoor = score_side(&args.outdoor, &config, LabelKind::OutdoorMotion)?;

    let outcome = calibrate_threshold(&indoor, &outdoor)?;
    if args.report {
        print!("{}", calibration_report(&outcome, &indoor, &outdoor));
    }
    match outcome {
        CalibrationOutcome::Separable {
            threshold_t,
            margin,
            ..
        } => {
            config.detector.threshold_t = Some(threshold_t);
            config.validate()?;
            fs::write(&args.config, config::render_str(&config))
                .with_context(|| format!("writing config {}", args.config.display()))?;
            println!(
                "calibrated: threshold_t={threshold_t:.6} margin={margin:.6} -> {}",
                args.config.display()
            );
            Ok(())
        }
        outcome @ CalibrationOutcome::NonSeparable { .. } => {
            if !args.report {
                print!("{}", calibration_report(&outcome, &indoor, &outdoor));
            }
            eprintln!("calibration failed: sessions are not separable");
            std::process::exit(2);
        }
    }
}

fn cmd_replay(args: &ReplayArgs) -> Result<()> {
    let config = load_config(&args.config, false)?;
    let stream = read_trace_file(&args.trace)?;
    let sidecar = args
        .labels
        .clone()
        .unwrap_or_else(|| labels_path(&args.trace));
    let labels = read_labels_file(&sidecar)?;

    let report = run_replay(&stream, &labels, &config)?;
    if let Some(log) = &args.log {
        emit_log(log, &report.render_event_log())?;
    }
    print!("{}", report.render_summary());
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut config = load_config(&args.config, false)?;
    if let Some(actuator) = &args.actuator {
        config.daemon.actuator_command = Some(actuator.clone());
    }

    let mut source: Box<dyn FrameSource> = match args.source {
        SourceKind::ReplayLoop => {
            let Some(trace) = &args.trace else {
                bail!("--source replay-loop needs --trace");
            };
            Box::new(ReplayLoopSource::new(read_trace_file(trace)?)?)
        }
        SourceKind::Synthetic => {
            let Some(name) = &args.scenario else {
                bail!("--source synthetic needs --scenario");
            };
            let preset = find_preset(name)?;
            Box::new(SyntheticSource::from_preset(
                &preset,
                config.daemon.probe_rate_hz,
            )?)
        }
    };

    if args.speed < 0.0 {
        bail!("--speed must be >= 0");
    }
    let options = LiveOptions {
        speed: (args.speed > 0.0).then_some(args.speed),
        max_frames: args.max_frames,
        ..LiveOptions::default()
    };

    let report = run_live(source.as_mut(), &config, &options)?;
    if let Some(log) = &args.log {
        emit_log(log, &report.render_event_log())?;
    }
    print!("{}", report.render_summary());
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let stream = read_trace_file(&args.trace)?;
    let mut out = String::new();
    out.push_str(&format!("trace: {}\n", args.trace.display()));
    match stream.geometry() {
        Some((n_tx, n_rx, n_sub)) => out.push_str(&format!(
            "geometry: n_tx={} n_rx={} n_sub={} streams={}\n",
            n_tx,
            n_rx,
            n_sub,
            n_sub as usize * n_tx as usize * n_rx as usize
        )),
        None => out.push_str("geometry: (empty trace)\n"),
    }
    out.push_str(&format!(
        "sample_rate_hz: {} frames: {} duration_s: {:.3}\n",
        stream.sample_rate_hz,
        stream.frames.len(),
        stream.duration_s()
    ));
    if let (Some(first), Some(last)) = (stream.frames.first(), stream.frames.last()) {
        out.push_str(&format!(
            "timestamps_us: first={} last={}\n",
            first.timestamp_us, last.timestamp_us
        ));
        let amplitudes = csi_amplitude_streams(&stream)?;
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &a in amplitudes.iter() {
            lo = lo.min(a);
            hi = hi.max(a);
            sum += a;
        }
        out.push_str(&format!(
            "amplitude: min={:.6} mean={:.6} max={:.6}\n",
            lo,
            sum / amplitudes.len() as f64,
            hi
        ));
    }

    let sidecar = labels_path(&args.trace);
    if sidecar.exists() {
        let records = read_labels_file(&sidecar)?;
        out.push_str(&format!("labels: {} ranges\n", records.len()));
        for rec in &records {
            out.push_str(&format!(
                "  {}..{} {}\n",
                rec.start_us, rec.end_us, rec.label
            ));
        }
    } else {
        out.push_str("labels: (no sidecar)\n");
    }

    let mut stdout = std::io::stdout().lock();
    stdout.write_all(out.as_bytes())?;
    Ok(())
}
