//! Live ingestion: a frame-source abstraction (looped trace replay or the
//! synthetic channel), an incremental version of the offline pipeline
//! (streaming median with bounded lookahead, EMA, warm-started low-pass,
//! projection basis fitted at the end of warm-up), and the daemon loop that
//! drives detector and gate in real or accelerated time, firing the actuator
//! hook on gate transitions.

use std::collections::VecDeque;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;

use crate::config::AppConfig;
use crate::detect::{self, MotionEvent, Verdict};
use crate::dsp::{
    butterworth_design, pca_fit, pca_project, Biquad, DspError, FeatureSample, PcaBasis,
    PipelineConfig, PipelineOrder,
};
use crate::gate::{gate_step, GateChange, GateState};
use crate::replay::{EventKind, EventRecord, ReplayError};
use crate::synth::{synthesize_schedule, ScenarioPreset, SynthError};
use crate::trace::{CsiFrame, CsiStream, LabelKind, MotionKind, SessionLabel, TraceError};

/// Anything that can hand the daemon CSI frames in timestamp order.
pub trait FrameSource {
    /// The next frame, or `None` when the source is exhausted.
    fn next_frame(&mut self) -> Result<Option<CsiFrame>, TraceError>;
    fn sample_rate_hz(&self) -> f64;
    fn description(&self) -> String;
}

/// Replays a recorded stream in a loop forever, rebasing timestamps each
/// pass so time keeps moving forward.
pub struct ReplayLoopSource {
    frames: Vec<CsiFrame>,
    sample_rate_hz: f64,
    /// Timestamp advance between loop passes: last timestamp plus one
    /// nominal interval.
    span_us: u64,
    idx: usize,
    offset_us: u64,
}

impl ReplayLoopSource {
    pub fn new(stream: CsiStream) -> Result<Self, TraceError> {
        stream.validate()?;
        if stream.frames.is_empty() {
            return Err(TraceError::EmptyInput(
                "replay-loop source needs at least one frame",
            ));
        }
        let interval = stream
            .median_interval_us()
            .unwrap_or_else(|| (1e6 / stream.sample_rate_hz).round() as u64)
            .max(1);
        let span_us = stream.frames.last().unwrap().timestamp_us + interval;
        Ok(ReplayLoopSource {
            sample_rate_hz: stream.sample_rate_hz,
            span_us,
            idx: 0,
            offset_us: 0,
            frames: stream.frames,
        })
    }
}

impl FrameSource for ReplayLoopSource {
    fn next_frame(&mut self) -> Result<Option<CsiFrame>, TraceError> {
        let mut frame = self.frames[self.idx].clone();
        frame.timestamp_us += self.offset_us;
        self.idx += 1;
        if self.idx == self.frames.len() {
            self.idx = 0;
            self.offset_us += self.span_us;
        }
        Ok(Some(frame))
    }

    fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    fn description(&self) -> String {
        format!(
            "replay-loop ({} frames at {} Hz)",
            self.frames.len(),
            self.sample_rate_hz
        )
    }
}

/// Generates a preset scenario on the fly: a quiet lead (long enough for
/// warm-up), one motion burst, and a quiet tail, looped forever.
pub struct SyntheticSource {
    inner: ReplayLoopSource,
    name: &'static str,
}

impl SyntheticSource {
    /// Default cycle: 10 s quiet, 4 s of the preset's motion, 6 s quiet.
    pub fn from_preset(preset: &ScenarioPreset, sample_rate_hz: f64) -> Result<Self, SynthError> {
        Self::with_cycle(preset, sample_rate_hz, 10.0, 4.0, 6.0)
    }

    pub fn with_cycle(
        preset: &ScenarioPreset,
        sample_rate_hz: f64,
        lead_s: f64,
        burst_s: f64,
        tail_s: f64,
    ) -> Result<Self, SynthError> {
        let quiet = SessionLabel::new(
            LabelKind::NoMotion,
            MotionKind::None,
            preset.label.location_tag.clone(),
        );
        let schedule = [
            (quiet.clone(), lead_s),
            (preset.label.clone(), burst_s),
            (quiet, tail_s),
        ];
        let (stream, _) = synthesize_schedule(&preset.model, &schedule, sample_rate_hz, (1, 1, 30))?;
        let inner = ReplayLoopSource::new(stream)
            .map_err(|e| SynthError::Config(format!("generated stream unusable: {e}")))?;
        Ok(SyntheticSource {
            inner,
            name: preset.name,
        })
    }
}

impl FrameSource for SyntheticSource {
    fn next_frame(&mut self) -> Result<Option<CsiFrame>, TraceError> {
        self.inner.next_frame()
    }

    fn sample_rate_hz(&self) -> f64 {
        self.inner.sample_rate_hz()
    }

    fn description(&self) -> String {
        format!("synthetic:{}", self.name)
    }
}

/// Incremental median + EMA + low-pass over columns. The median needs
/// `(window-1)/2` frames of lookahead, so output rows trail input rows by
/// that many samples; apart from the trailing flush they match the offline
/// filters exactly.
struct StreamingFilter {
    columns: usize,
    window: usize,
    half: usize,
    beta: f64,
    sections: Vec<Biquad>,
    /// The last `window` raw rows as (timestamp, values).
    ring: VecDeque<(u64, Vec<f64>)>,
    arrived: usize,
    emitted: usize,
    ema: Vec<f64>,
    /// Per column, per section: (z1, z2) delay states.
    states: Vec<Vec<(f64, f64)>>,
    primed: bool,
    scratch: Vec<f64>,
}

impl StreamingFilter {
    fn new(columns: usize, config: &PipelineConfig) -> Result<Self, DspError> {
        let lowpass = butterworth_design(
            config.butterworth_order,
            config.butterworth_cutoff_hz,
            config.sample_rate_hz,
        )?;
        let sections = lowpass.sections;
        Ok(StreamingFilter {
            columns,
            window: config.median_window,
            half: config.median_window / 2,
            beta: 2.0 / (config.ema_window as f64 + 1.0),
            states: vec![vec![(0.0, 0.0); sections.len()]; columns],
            sections,
            ring: VecDeque::with_capacity(config.median_window + 1),
            arrived: 0,
            emitted: 0,
            ema: vec![0.0; columns],
            primed: false,
            scratch: vec![0.0; config.median_window],
        })
    }

    fn push(&mut self, timestamp_us: u64, row: Vec<f64>, out: &mut Vec<(u64, Vec<f64>)>) {
        debug_assert_eq!(row.len(), self.columns);
        self.ring.push_back((timestamp_us, row));
        if self.ring.len() > self.window {
            self.ring.pop_front();
        }
        self.arrived += 1;
        while self.emitted + self.half < self.arrived {
            self.emit_center(out);
        }
    }

    /// Emit the remaining centers once the source has ended, replicating the
    /// final row as the offline edge rule does.
    fn flush(&mut self, out: &mut Vec<(u64, Vec<f64>)>) {
        while self.emitted < self.arrived {
            self.emit_center(out);
        }
    }

    fn emit_center(&mut self, out: &mut Vec<(u64, Vec<f64>)>) {
        let n = self.emitted as isize;
        let last = self.arrived as isize - 1;
        let ring_base = self.arrived - self.ring.len();
        let timestamp_us = self.ring[self.emitted - ring_base].0;

        let mut filtered = Vec::with_capacity(self.columns);
        for col in 0..self.columns {
            for (slot, j) in (n - self.half as isize..=n + self.half as isize).enumerate() {
                let j = j.clamp(0, last) as usize;
                self.scratch[slot] = self.ring[j - ring_base].1[col];
            }
            let (_, median, _) = self
                .scratch
                .select_nth_unstable_by(self.half, f64::total_cmp);
            let median = *median;

            let smoothed = if self.primed {
                self.beta * median + (1.0 - self.beta) * self.ema[col]
            } else {
                median
            };
            self.ema[col] = smoothed;

            if !self.primed {
                // Steady-state initialization at the first value: with unity
                // per-section DC gain this is a warm start, so a constant
                // column passes through unchanged.
                for (s, section) in self.sections.iter().enumerate() {
                    let z2 = (section.b2 - section.a2) * smoothed;
                    let z1 = (section.b1 - section.a1) * smoothed + z2;
                    self.states[col][s] = (z1, z2);
                }
            }
            let mut x = smoothed;
            for (s, section) in self.sections.iter().enumerate() {
                let (z1, z2) = self.states[col][s];
                let y = section.b0 * x + z1;
                let new_z1 = section.b1 * x - section.a1 * y + z2;
                let new_z2 = section.b2 * x - section.a2 * y;
                self.states[col][s] = (new_z1, new_z2);
                x = y;
            }
            filtered.push(x);
        }
        self.primed = true;
        self.emitted += 1;
        out.push((timestamp_us, filtered));
    }
}

/// Options for a live run. `speed` of 1.0 paces frames at their timestamp
/// rate, larger values run faster, `None` runs unpaced; `max_frames` bounds
/// the run (looping sources never end on their own).
pub struct LiveOptions {
    pub speed: Option<f64>,
    pub max_frames: Option<usize>,
    /// A frame arriving later than this marks the source stalled.
    pub stall_timeout: Duration,
    /// When set, every gate transition is published here for other threads.
    pub gate_publish: Option<Arc<RwLock<GateState>>>,
}

impl Default for LiveOptions {
    fn default() -> Self {
        LiveOptions {
            speed: None,
            max_frames: None,
            stall_timeout: Duration::from_secs(2),
            gate_publish: None,
        }
    }
}

/// Outcome of a bounded live run.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveReport {
    pub events: Vec<EventRecord>,
    pub motion_events: Vec<MotionEvent>,
    pub frames: usize,
    pub stalls: usize,
    pub source: String,
    pub offered_load_bps: f64,
}

impl LiveReport {
    #[must_use]
    pub fn render_event_log(&self) -> String {
        let mut out = String::new();
        for record in &self.events {
            out.push_str(&record.to_string());
            out.push('\n');
        }
        out
    }

    #[must_use]
    pub fn render_summary(&self) -> String {
        format!(
            "source={} frames={} motion_events={} stalls={} probe_load_bps={:.0}\n",
            self.source,
            self.frames,
            self.motion_events.len(),
            self.stalls,
            self.offered_load_bps
        )
    }
}

/// Replace the `{transition}` placeholder, or append the transition name
/// when the template has no placeholder.
fn actuator_line(template: &str, transition: &str) -> String {
    if template.contains("{transition}") {
        template.replace("{transition}", transition)
    } else {
        format!("{template} {transition}")
    }
}

fn run_actuator(template: &str, transition: &str) {
    let line = actuator_line(template, transition);
    match std::process::Command::new("sh").arg("-c").arg(&line).spawn() {
        Ok(mut child) => {
            // Reap in the background so a slow hook never blocks ingestion.
            std::thread::spawn(move || {
                let _ = child.wait();
            });
        }
        Err(e) => eprintln!("actuator command failed to start: {e}"),
    }
}

/// The live daemon loop: ingest frames from `source`, run the incremental
/// pipeline, detector, and gate, log events, and invoke the actuator on
/// ENABLE/DISABLE transitions. Returns when the source ends or `max_frames`
/// is reached.
pub fn run_live(
    source: &mut dyn FrameSource,
    config: &AppConfig,
    options: &LiveOptions,
) -> Result<LiveReport, ReplayError> {
    config
        .validate()
        .map_err(|e| ReplayError::Config(e.to_string()))?;
    let detector_config = config.detector.to_detector_config().map_err(|_| {
        ReplayError::Config("calibrated threshold_t missing - run calibration first".into())
    })?;
    let mut pipeline = config.pipeline.clone();
    pipeline.sample_rate_hz = source.sample_rate_hz();
    pipeline.validate()?;

    let mut filter: Option<StreamingFilter> = None;
    let mut basis: Option<PcaBasis> = None;
    let mut warmup_rows: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut features: Vec<FeatureSample> = Vec::new();
    let mut detector: Option<detect::DetectorState> = None;

    let mut gate = GateState::new();
    let mut events: Vec<EventRecord> = Vec::new();
    let mut motion_events: Vec<MotionEvent> = Vec::new();
    let mut stalls = 0usize;
    let mut suppress_remaining = 0usize;
    let mut prev_streak = 0u32;
    let mut frames_seen = 0usize;
    let mut last_ts: Option<u64> = None;
    let mut columns = 0usize;
    let mut recorded: Vec<CsiFrame> = Vec::new();

    let wall_start = Instant::now();
    let mut first_ts: Option<u64> = None;

    let mut pending: Vec<(u64, Vec<f64>)> = Vec::new();
    loop {
        if let Some(max) = options.max_frames {
            if frames_seen >= max {
                break;
            }
        }
        let asked_at = Instant::now();
        let frame = source.next_frame()?;
        let waited = asked_at.elapsed();
        let Some(frame) = frame else {
            break;
        };
        frame.validate()?;
        if let Some(last) = last_ts {
            if frame.timestamp_us <= last {
                return Err(TraceError::Invariant(format!(
                    "source timestamps must increase: {} after {}",
                    frame.timestamp_us, last
                ))
                .into());
            }
        }
        last_ts = Some(frame.timestamp_us);
        first_ts.get_or_insert(frame.timestamp_us);
        frames_seen += 1;

        if waited > options.stall_timeout {
            stalls += 1;
            events.push(EventRecord {
                timestamp_us: frame.timestamp_us,
                kind: EventKind::SourceStall,
            });
            // A gap corrupts the filters' recent history; give the detector
            // a holiday until the windows have refilled.
            suppress_remaining = pipeline.median_window + pipeline.ema_window;
        }

        if let Some(speed) = options.speed {
            let logical_us = (frame.timestamp_us - first_ts.unwrap()) as f64 / speed;
            let target = Duration::from_micros(logical_us as u64);
            let elapsed = wall_start.elapsed();
            if target > elapsed {
                std::thread::sleep(target - elapsed);
            }
        }

        if config.daemon.trace_out.is_some() {
            recorded.push(frame.clone());
        }

        // Amplitude row in the same entry order the frame stores.
        let row: Vec<f64> = frame
            .h
            .iter()
            .map(|z| ((z.re as f64).powi(2) + (z.im as f64).powi(2)).sqrt())
            .collect();
        if filter.is_none() {
            columns = row.len();
            match pipeline.pipeline_order {
                PipelineOrder::FilterFirst => {
                    filter = Some(StreamingFilter::new(columns, &pipeline)?);
                }
                PipelineOrder::PcaFirst => {
                    filter = Some(StreamingFilter::new(pipeline.feature_dim(), &pipeline)?);
                }
            }
        }
        if row.len() != columns {
            return Err(TraceError::Invariant(format!(
                "frame geometry changed mid-stream: {} entries after {}",
                row.len(),
                columns
            ))
            .into());
        }

        pending.clear();
        match pipeline.pipeline_order {
            PipelineOrder::FilterFirst => {
                filter
                    .as_mut()
                    .unwrap()
                    .push(frame.timestamp_us, row, &mut pending);
                drain_filtered(
                    &mut pending,
                    &mut warmup_rows,
                    &mut basis,
                    &pipeline,
                    detector_config.warmup_samples,
                    &mut features,
                )?;
            }
            PipelineOrder::PcaFirst => {
                // Project first (fitting the basis on raw warm-up rows),
                // then filter the projected columns.
                if basis.is_none() {
                    warmup_rows.push((frame.timestamp_us, row));
                    if warmup_rows.len() == detector_config.warmup_samples {
                        let fitted = fit_basis(&warmup_rows)?;
                        for (ts, raw) in warmup_rows.drain(..) {
                            let projected = pca_project(&fitted, &raw, &pipeline.pca_keep)?;
                            filter.as_mut().unwrap().push(ts, projected, &mut pending);
                        }
                        basis = Some(fitted);
                    }
                } else {
                    let projected =
                        pca_project(basis.as_ref().unwrap(), &row, &pipeline.pca_keep)?;
                    filter
                        .as_mut()
                        .unwrap()
                        .push(frame.timestamp_us, projected, &mut pending);
                }
                for (ts, values) in pending.drain(..) {
                    features.push(FeatureSample {
                        timestamp_us: ts,
                        values,
                    });
                }
            }
        }

        // Detector and gate run over whatever features became ready.
        while let Some(sample) = next_unprocessed(&mut features, &mut detector, &detector_config)? {
            process_feature(
                &sample,
                detector.as_mut().unwrap(),
                &detector_config,
                config,
                options,
                &mut gate,
                &mut events,
                &mut motion_events,
                &mut prev_streak,
                &mut suppress_remaining,
            )?;
        }
    }

    // End of run: drain the median lookahead so the tail frames are
    // processed too.
    if let Some(filter) = filter.as_mut() {
        pending.clear();
        filter.flush(&mut pending);
        match pipeline.pipeline_order {
            PipelineOrder::FilterFirst => {
                drain_filtered(
                    &mut pending,
                    &mut warmup_rows,
                    &mut basis,
                    &pipeline,
                    detector_config.warmup_samples,
                    &mut features,
                )?;
            }
            PipelineOrder::PcaFirst => {
                for (ts, values) in pending.drain(..) {
                    features.push(FeatureSample {
                        timestamp_us: ts,
                        values,
                    });
                }
            }
        }
        while let Some(sample) = next_unprocessed(&mut features, &mut detector, &detector_config)? {
            process_feature(
                &sample,
                detector.as_mut().unwrap(),
                &detector_config,
                config,
                options,
                &mut gate,
                &mut events,
                &mut motion_events,
                &mut prev_streak,
                &mut suppress_remaining,
            )?;
        }
    }

    if let (Some(path), false) = (&config.daemon.trace_out, recorded.is_empty()) {
        let stream = CsiStream {
            sample_rate_hz: source.sample_rate_hz(),
            frames: recorded,
        };
        let file = std::fs::File::create(path)
            .map_err(|e| ReplayError::Config(format!("cannot create trace_out: {e}")))?;
        crate::trace::write_trace(&stream, std::io::BufWriter::new(file))?;
    }

    Ok(LiveReport {
        events,
        motion_events,
        frames: frames_seen,
        stalls,
        source: source.description(),
        offered_load_bps: config.daemon.offered_load_bps(),
    })
}

/// Move filtered rows into the warm-up buffer until the basis can be
/// fitted, then emit projected features.
fn drain_filtered(
    pending: &mut Vec<(u64, Vec<f64>)>,
    warmup_rows: &mut Vec<(u64, Vec<f64>)>,
    basis: &mut Option<PcaBasis>,
    pipeline: &PipelineConfig,
    warmup_samples: usize,
    features: &mut Vec<FeatureSample>,
) -> Result<(), ReplayError> {
    for (ts, values) in pending.drain(..) {
        match basis {
            None => {
                warmup_rows.push((ts, values));
                if warmup_rows.len() == warmup_samples {
                    let fitted = fit_basis(warmup_rows)?;
                    for (row_ts, row) in warmup_rows.drain(..) {
                        let projected = pca_project(&fitted, &row, &pipeline.pca_keep)?;
                        features.push(FeatureSample {
                            timestamp_us: row_ts,
                            values: projected,
                        });
                    }
                    *basis = Some(fitted);
                }
            }
            Some(fitted) => {
                let projected = pca_project(fitted, &values, &pipeline.pca_keep)?;
                features.push(FeatureSample {
                    timestamp_us: ts,
                    values: projected,
                });
            }
        }
    }
    Ok(())
}

fn fit_basis(rows: &[(u64, Vec<f64>)]) -> Result<PcaBasis, ReplayError> {
    let columns = rows[0].1.len();
    let matrix = DMatrix::from_fn(rows.len(), columns, |r, c| rows[r].1[c]);
    Ok(pca_fit(&matrix)?)
}

/// Pop the next feature once the detector is warmed; warms the detector when
/// enough features have accumulated.
fn next_unprocessed(
    features: &mut Vec<FeatureSample>,
    detector: &mut Option<detect::DetectorState>,
    detector_config: &detect::DetectorConfig,
) -> Result<Option<FeatureSample>, ReplayError> {
    if detector.is_none() {
        if features.len() < detector_config.warmup_samples {
            return Ok(None);
        }
        let state = detect::warmup(features, detector_config)?;
        features.drain(..detector_config.warmup_samples);
        *detector = Some(state);
    }
    if features.is_empty() {
        return Ok(None);
    }
    Ok(Some(features.remove(0)))
}

#[allow(clippy::too_many_arguments)]
fn process_feature(
    sample: &FeatureSample,
    state: &mut detect::DetectorState,
    detector_config: &detect::DetectorConfig,
    config: &AppConfig,
    options: &LiveOptions,
    gate: &mut GateState,
    events: &mut Vec<EventRecord>,
    motion_events: &mut Vec<MotionEvent>,
    prev_streak: &mut u32,
    suppress_remaining: &mut usize,
) -> Result<(), ReplayError> {
    let ts = sample.timestamp_us;
    let mut event = None;
    if *suppress_remaining > 0 {
        *suppress_remaining -= 1;
    } else {
        let (verdict, fired, _) = detect::step_full(state, sample, detector_config)?;
        match verdict {
            Verdict::Anomaly if *prev_streak == 0 => events.push(EventRecord {
                timestamp_us: ts,
                kind: EventKind::AnomalyStart,
            }),
            Verdict::Normal if *prev_streak > 0 => events.push(EventRecord {
                timestamp_us: ts,
                kind: EventKind::AnomalyEnd,
            }),
            _ => {}
        }
        *prev_streak = state.streak();
        event = fired;
    }

    if let Some(event) = &event {
        events.push(EventRecord {
            timestamp_us: ts,
            kind: EventKind::MotionDetected {
                peak: event.peak_distance,
            },
        });
        motion_events.push(event.clone());
    }

    let (next_gate, changes) = gate_step(gate, ts, event.as_ref(), &config.daemon)?;
    *gate = next_gate;
    if !changes.is_empty() {
        if let Some(published) = &options.gate_publish {
            if let Ok(mut slot) = published.write() {
                *slot = gate.clone();
            }
        }
    }
    for change in changes {
        match change {
            GateChange::Enabled { until_us } => {
                events.push(EventRecord {
                    timestamp_us: ts,
                    kind: EventKind::GateEnabled { until_us },
                });
                if let Some(cmd) = &config.daemon.actuator_command {
                    run_actuator(cmd, "ENABLE");
                }
            }
            GateChange::Extended { until_us } => {
                events.push(EventRecord {
                    timestamp_us: ts,
                    kind: EventKind::GateEnabled { until_us },
                });
            }
            GateChange::Disabled => {
                events.push(EventRecord {
                    timestamp_us: ts,
                    kind: EventKind::GateDisabled,
                });
                if let Some(cmd) = &config.daemon.actuator_command {
                    run_actuator(cmd, "DISABLE");
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::filter_columns;
    use crate::synth::standard_scenarios;

    /// Finite in-memory source with optional injected delay on one frame.
    struct VecSource {
        frames: Vec<CsiFrame>,
        rate: f64,
        idx: usize,
        delay_at: Option<(usize, Duration)>,
    }

    impl FrameSource for VecSource {
        fn next_frame(&mut self) -> Result<Option<CsiFrame>, TraceError> {
            if self.idx >= self.frames.len() {
                return Ok(None);
            }
            if let Some((at, delay)) = self.delay_at {
                if self.idx == at {
                    std::thread::sleep(delay);
                }
            }
            let frame = self.frames[self.idx].clone();
            self.idx += 1;
            Ok(Some(frame))
        }

        fn sample_rate_hz(&self) -> f64 {
            self.rate
        }

        fn description(&self) -> String {
            "test-vec".to_string()
        }
    }

    fn quick_config(threshold: f64, warmup: usize) -> AppConfig {
        let mut config = AppConfig::default();
        config.detector.threshold_t = Some(threshold);
        config.detector.warmup_samples = warmup;
        config
    }

    fn jump_cycle_frames(lead_s: f64, burst_s: f64, tail_s: f64) -> (Vec<CsiFrame>, f64) {
        let scenarios = standard_scenarios();
        let jump = &scenarios[3];
        let mut source = SyntheticSource::with_cycle(jump, 50.0, lead_s, burst_s, tail_s).unwrap();
        let total = ((lead_s + burst_s + tail_s) * 50.0) as usize;
        let frames: Vec<CsiFrame> = (0..total)
            .map(|_| source.next_frame().unwrap().unwrap())
            .collect();
        (frames, 50.0)
    }

    #[test]
    fn streaming_filters_match_offline_pipeline() {
        let (frames, rate) = jump_cycle_frames(2.0, 2.0, 1.0);
        let stream = CsiStream {
            sample_rate_hz: rate,
            frames: frames.clone(),
        };
        let amplitudes = crate::trace::csi_amplitude_streams(&stream).unwrap();
        let mut pipeline = PipelineConfig::default();
        pipeline.sample_rate_hz = rate;
        let offline = filter_columns(&amplitudes, &pipeline).unwrap();

        let mut streaming = StreamingFilter::new(amplitudes.ncols(), &pipeline).unwrap();
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
        for frame in &frames {
            let row: Vec<f64> = frame
                .h
                .iter()
                .map(|z| ((z.re as f64).powi(2) + (z.im as f64).powi(2)).sqrt())
                .collect();
            streaming.push(frame.timestamp_us, row, &mut rows);
        }
        streaming.flush(&mut rows);

        assert_eq!(rows.len(), offline.nrows());
        let mut worst = 0.0f64;
        for (r, (ts, values)) in rows.iter().enumerate() {
            assert_eq!(*ts, frames[r].timestamp_us);
            for (c, v) in values.iter().enumerate() {
                worst = worst.max((v - offline[(r, c)]).abs());
            }
        }
        assert!(
            worst < 1e-9,
            "streaming/offline filter divergence {worst:.3e}"
        );
    }

    #[test]
    fn live_detects_burst_and_fires_actuator() {
        let (frames, rate) = jump_cycle_frames(2.0, 2.0, 2.0);
        let dir = tempfile::tempdir().unwrap();
        let marker = dir.path().join("transitions.log");
        let mut source = VecSource {
            frames,
            rate,
            idx: 0,
            delay_at: None,
        };
        let mut config = quick_config(8.0, 50);
        config.daemon.actuator_command = Some(format!(
            "echo {{transition}} >> {}",
            marker.display()
        ));
        let report = run_live(&mut source, &config, &LiveOptions::default()).unwrap();

        assert!(
            !report.motion_events.is_empty(),
            "burst not detected: {}",
            report.render_event_log()
        );
        assert!(report
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::GateEnabled { .. })));
        // Event within one second of burst onset (2 s in).
        let first = &report.motion_events[0];
        assert!(
            first.timestamp_us >= 2_000_000 && first.timestamp_us < 3_000_000,
            "event at {} us",
            first.timestamp_us
        );

        // The actuator hook runs asynchronously; give it a moment.
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            if let Ok(text) = std::fs::read_to_string(&marker) {
                if text.contains("ENABLE") {
                    break;
                }
            }
            assert!(Instant::now() < deadline, "actuator never ran");
            std::thread::sleep(Duration::from_millis(20));
        }
    }

    #[test]
    fn quiet_run_stays_quiet_and_loops() {
        let scenarios = standard_scenarios();
        let mut source = SyntheticSource::from_preset(&scenarios[0], 50.0).unwrap();
        let config = quick_config(8.0, 250);
        let options = LiveOptions {
            max_frames: Some(1200), // loops past the 1000-frame cycle
            ..LiveOptions::default()
        };
        let report = run_live(&mut source, &config, &options).unwrap();
        assert_eq!(report.frames, 1200);
        assert!(report.motion_events.is_empty());
        assert_eq!(report.stalls, 0);
        assert!(report.render_summary().contains("probe_load_bps=33600"));
    }

    #[test]
    fn stall_is_logged_and_suppresses_detection() {
        let (frames, rate) = jump_cycle_frames(2.0, 1.0, 1.0);
        let mut source = VecSource {
            frames,
            rate,
            idx: 0,
            delay_at: Some((120, Duration::from_millis(80))),
        };
        let config = quick_config(8.0, 50);
        let options = LiveOptions {
            stall_timeout: Duration::from_millis(40),
            ..LiveOptions::default()
        };
        let report = run_live(&mut source, &config, &options).unwrap();
        assert_eq!(report.stalls, 1);
        assert!(report
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::SourceStall)));
    }

    #[test]
    fn gate_snapshot_is_published() {
        let (frames, rate) = jump_cycle_frames(2.0, 2.0, 1.0);
        let mut source = VecSource {
            frames,
            rate,
            idx: 0,
            delay_at: None,
        };
        let config = quick_config(8.0, 50);
        let shared = Arc::new(RwLock::new(GateState::new()));
        let options = LiveOptions {
            gate_publish: Some(Arc::clone(&shared)),
            ..LiveOptions::default()
        };
        let report = run_live(&mut source, &config, &options).unwrap();
        assert!(!report.motion_events.is_empty());
        let snapshot = shared.read().unwrap();
        assert!(snapshot.last_event.is_some());
    }

    #[test]
    fn replay_loop_source_rebases_time() {
        let scenarios = standard_scenarios();
        let (stream, _) = crate::synth::synthesize(
            &scenarios[0].model,
            &SessionLabel::new(LabelKind::NoMotion, MotionKind::None, "x"),
            1.0,
            50.0,
        )
        .unwrap();
        let mut source = ReplayLoopSource::new(stream).unwrap();
        let mut last = None;
        for _ in 0..125 {
            let frame = source.next_frame().unwrap().unwrap();
            if let Some(prev) = last {
                assert!(frame.timestamp_us > prev, "timestamps keep increasing");
            }
            last = Some(frame.timestamp_us);
        }
    }

    #[test]
    fn actuator_template_substitution() {
        assert_eq!(
            actuator_line("notify {transition} now", "ENABLE"),
            "notify ENABLE now"
        );
        assert_eq!(actuator_line("toggle-mic", "DISABLE"), "toggle-mic DISABLE");
    }

    #[test]
    fn pca_first_live_matches_sizes() {
        let (frames, rate) = jump_cycle_frames(2.0, 1.0, 1.0);
        let mut source = VecSource {
            frames,
            rate,
            idx: 0,
            delay_at: None,
        };
        let mut config = quick_config(1e9, 50);
        config.pipeline.pipeline_order = PipelineOrder::PcaFirst;
        let report = run_live(&mut source, &config, &LiveOptions::default()).unwrap();
        assert_eq!(report.frames, 200);
        assert!(report.motion_events.is_empty(), "threshold is enormous");
    }
}
