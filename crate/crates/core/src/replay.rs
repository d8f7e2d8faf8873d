//! Offline replay: run the full pipeline -> detector -> gate stack over a
//! recorded trace at logical (timestamp-driven) time, producing the event
//! log, the per-label detection/false-alarm tallies, and the total enabled
//! time. Replay is deterministic: identical inputs give identical logs.

use std::fmt;

use thiserror::Error;

use crate::config::AppConfig;
use crate::detect::{self, DetectError, MotionEvent, Verdict};
use crate::dsp::{self, DspError, PipelineOrder};
use crate::gate::{gate_step, DaemonConfig, GateChange, GateState, GateError};
use crate::trace::{CsiStream, LabelKind, LabelRecord, SessionLabel, TraceError};

/// How long after a labeled range ends a MotionEvent is still attributed to
/// it (covers pipeline and streak latency).
const ATTRIBUTION_GRACE_US: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Gate(#[from] GateError),
}

/// One log line's payload.
#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    AnomalyStart,
    AnomalyEnd,
    MotionDetected { peak: f64 },
    GateEnabled { until_us: u64 },
    GateDisabled,
    SourceStall,
}

/// One event-log line: `<timestamp_us> <EVENT>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub timestamp_us: u64,
    pub kind: EventKind,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            EventKind::AnomalyStart => write!(f, "{} ANOMALY_START", self.timestamp_us),
            EventKind::AnomalyEnd => write!(f, "{} ANOMALY_END", self.timestamp_us),
            EventKind::MotionDetected { peak } => {
                write!(f, "{} MOTION_DETECTED peak={peak:.6}", self.timestamp_us)
            }
            EventKind::GateEnabled { until_us } => {
                write!(f, "{} GATE_ENABLED until={until_us}", self.timestamp_us)
            }
            EventKind::GateDisabled => write!(f, "{} GATE_DISABLED", self.timestamp_us),
            EventKind::SourceStall => write!(f, "{} SOURCE_STALL", self.timestamp_us),
        }
    }
}

/// Detection bookkeeping for one distinct label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTally {
    pub label: SessionLabel,
    /// Labeled ranges carrying this label.
    pub ranges: u64,
    /// Ranges that produced at least one attributed MotionEvent.
    pub detected_ranges: u64,
    /// MotionEvents attributed to this label.
    pub events: u64,
    /// Events attributed here that should not have fired (any event outside
    /// an indoor-motion range).
    pub false_alarms: u64,
}

/// Everything a replay run yields.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub events: Vec<EventRecord>,
    pub motion_events: Vec<MotionEvent>,
    pub tallies: Vec<LabelTally>,
    /// Total enabled time, clamped to the trace window.
    pub enabled_total_us: u64,
    pub frames: usize,
    pub duration_s: f64,
    pub threshold_t: f64,
}

impl ReplayReport {
    /// The event log as text, one record per line.
    #[must_use]
    pub fn render_event_log(&self) -> String {
        let mut out = String::new();
        for record in &self.events {
            out.push_str(&record.to_string());
            out.push('\n');
        }
        out
    }

    /// The exit summary: run totals plus per-label counts.
    #[must_use]
    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "frames={} duration_s={:.3} threshold_t={:.6}\n",
            self.frames, self.duration_s, self.threshold_t
        ));
        out.push_str(&format!(
            "motion_events={} enabled_total_us={}\n",
            self.motion_events.len(),
            self.enabled_total_us
        ));
        for tally in &self.tallies {
            out.push_str(&format!(
                "label {} ranges={} detected={} events={} false_alarms={}\n",
                tally.label, tally.ranges, tally.detected_ranges, tally.events, tally.false_alarms
            ));
        }
        out
    }
}

/// Index of the tally for `label`, creating it in first-appearance order.
fn tally_index(tallies: &mut Vec<LabelTally>, label: &SessionLabel) -> usize {
    if let Some(idx) = tallies.iter().position(|t| &t.label == label) {
        return idx;
    }
    tallies.push(LabelTally {
        label: label.clone(),
        ranges: 0,
        detected_ranges: 0,
        events: 0,
        false_alarms: 0,
    });
    tallies.len() - 1
}

/// Feature extraction shared by replay: filter and project in the
/// configured order, fitting the projection basis on the warm-up window.
pub(crate) fn extract_features(
    stream: &CsiStream,
    config: &AppConfig,
    warmup_samples: usize,
) -> Result<Vec<crate::dsp::FeatureSample>, ReplayError> {
    let mut pipeline = config.pipeline.clone();
    // The trace knows its own rate; the config's rate applies to live runs.
    pipeline.sample_rate_hz = stream.sample_rate_hz;
    pipeline
        .validate()
        .map_err(ReplayError::Dsp)?;
    if stream.frames.len() <= warmup_samples {
        return Err(ReplayError::Config(format!(
            "trace has {} frames but warm-up needs {}",
            stream.frames.len(),
            warmup_samples
        )));
    }
    let amplitudes = crate::trace::csi_amplitude_streams(stream)?;
    let features = match pipeline.pipeline_order {
        PipelineOrder::FilterFirst => {
            let filtered = dsp::filter_columns(&amplitudes, &pipeline)?;
            let basis = dsp::pca_fit(&filtered.rows(0, warmup_samples).into_owned())?;
            dsp::project_rows(&basis, &filtered, &pipeline.pca_keep)?
        }
        PipelineOrder::PcaFirst => {
            let basis = dsp::pca_fit(&amplitudes.rows(0, warmup_samples).into_owned())?;
            let projected = dsp::project_rows(&basis, &amplitudes, &pipeline.pca_keep)?;
            dsp::filter_columns(&projected, &pipeline)?
        }
    };
    Ok(dsp::collect_features(stream, &features))
}

/// Run the full offline stack over one labeled trace.
pub fn run_replay(
    stream: &CsiStream,
    labels: &[LabelRecord],
    config: &AppConfig,
) -> Result<ReplayReport, ReplayError> {
    config
        .validate()
        .map_err(|e| ReplayError::Config(e.to_string()))?;
    let detector_config = config.detector.to_detector_config().map_err(|_| {
        ReplayError::Config("calibrated threshold_t missing - run calibration first".into())
    })?;
    stream.validate()?;
    if labels.is_empty() {
        return Err(ReplayError::Config("no label records supplied".into()));
    }

    let samples = extract_features(stream, config, detector_config.warmup_samples)?;
    let mut state = detect::warmup(&samples, &detector_config)?;

    let daemon: &DaemonConfig = &config.daemon;
    let mut gate = GateState::new();
    let mut events: Vec<EventRecord> = Vec::new();
    let mut motion_events: Vec<MotionEvent> = Vec::new();
    let mut tallies: Vec<LabelTally> = Vec::new();
    let mut range_detected = vec![false; labels.len()];
    for record in labels {
        let idx = tally_index(&mut tallies, &record.label);
        tallies[idx].ranges += 1;
    }

    let mut cursor = 0usize;
    let mut prev_streak = 0u32;
    let mut span_start = 0u64;
    let mut current_until = 0u64;
    let mut enabled_total_us = 0u64;
    let mut gate_open = false;

    for sample in samples.iter().skip(detector_config.warmup_samples) {
        let ts = sample.timestamp_us;
        while cursor < labels.len() && ts >= labels[cursor].end_us {
            cursor += 1;
        }
        if cursor >= labels.len() || !labels[cursor].contains(ts) {
            return Err(DetectError::LabelCoverage { timestamp_us: ts }.into());
        }

        let (verdict, event, _distance) = detect::step_full(&mut state, sample, &detector_config)?;
        match verdict {
            Verdict::Anomaly if prev_streak == 0 => events.push(EventRecord {
                timestamp_us: ts,
                kind: EventKind::AnomalyStart,
            }),
            Verdict::Normal if prev_streak > 0 => events.push(EventRecord {
                timestamp_us: ts,
                kind: EventKind::AnomalyEnd,
            }),
            _ => {}
        }
        prev_streak = state.streak();

        if let Some(event) = &event {
            events.push(EventRecord {
                timestamp_us: ts,
                kind: EventKind::MotionDetected {
                    peak: event.peak_distance,
                },
            });
            motion_events.push(event.clone());

            // Attribute to the containing range; allow a short grace window
            // so an event landing just past an indoor range still counts
            // for it.
            let containing = &labels[cursor];
            let attributed = if containing.label.kind == LabelKind::IndoorMotion {
                Some(cursor)
            } else if cursor > 0
                && labels[cursor - 1].label.kind == LabelKind::IndoorMotion
                && ts < labels[cursor - 1].end_us + ATTRIBUTION_GRACE_US
            {
                Some(cursor - 1)
            } else {
                None
            };
            match attributed {
                Some(range) => {
                    let idx = tally_index(&mut tallies, &labels[range].label);
                    tallies[idx].events += 1;
                    range_detected[range] = true;
                }
                None => {
                    let idx = tally_index(&mut tallies, &containing.label);
                    tallies[idx].events += 1;
                    tallies[idx].false_alarms += 1;
                }
            }
        }

        let (next_gate, changes) = gate_step(&gate, ts, event.as_ref(), daemon)?;
        gate = next_gate;
        for change in changes {
            match change {
                GateChange::Enabled { until_us } => {
                    events.push(EventRecord {
                        timestamp_us: ts,
                        kind: EventKind::GateEnabled { until_us },
                    });
                    span_start = ts;
                    current_until = until_us;
                    gate_open = true;
                }
                GateChange::Extended { until_us } => {
                    events.push(EventRecord {
                        timestamp_us: ts,
                        kind: EventKind::GateEnabled { until_us },
                    });
                    current_until = until_us;
                }
                GateChange::Disabled => {
                    events.push(EventRecord {
                        timestamp_us: ts,
                        kind: EventKind::GateDisabled,
                    });
                    enabled_total_us += current_until - span_start;
                    gate_open = false;
                }
            }
        }
    }

    let last_ts = stream.frames.last().map(|f| f.timestamp_us).unwrap_or(0);
    if gate_open {
        enabled_total_us += current_until.min(last_ts) - span_start;
    }

    for (range, detected) in range_detected.iter().enumerate() {
        if *detected {
            let idx = tally_index(&mut tallies, &labels[range].label);
            tallies[idx].detected_ranges += 1;
        }
    }

    Ok(ReplayReport {
        events,
        motion_events,
        tallies,
        enabled_total_us,
        frames: stream.frames.len(),
        duration_s: stream.duration_s(),
        threshold_t: detector_config.threshold_t,
    })
}

/// Calibration scoring: run the pipeline over one labeled trace with a
/// provisional (infinite) threshold, so the baseline adapts freely, and
/// report the maximum distance seen inside each labeled range. The config's
/// `threshold_t` may be absent — it is not consulted.
pub fn score_sessions(
    stream: &CsiStream,
    labels: &[LabelRecord],
    config: &AppConfig,
) -> Result<Vec<detect::SessionStats>, ReplayError> {
    config
        .validate()
        .map_err(|e| ReplayError::Config(e.to_string()))?;
    let detector_config = config.detector.provisional_detector_config();
    stream.validate()?;
    if labels.is_empty() {
        return Err(ReplayError::Config("no label records supplied".into()));
    }
    let samples = extract_features(stream, config, detector_config.warmup_samples)?;
    let state = detect::warmup(&samples, &detector_config)?;
    let stats = detect::session_stats(
        &samples[detector_config.warmup_samples..],
        labels,
        state,
        &detector_config,
    )?;
    Ok(stats)
}
