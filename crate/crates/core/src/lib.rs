//! WiFi-CSI presence gate: turn channel-state fluctuations into a
//! motion-gated command switch.
//!
//! The crate is organized as a pipeline. [`trace`] defines the CSI containers
//! and the on-disk trace format, [`synth`] generates labeled multipath traces,
//! [`dsp`] reduces raw amplitude streams to low-dimensional feature samples,
//! [`detect`] scores features against an adaptive baseline and raises motion
//! events, and [`gate`]/[`replay`]/[`live`] run the enable/disable state
//! machine over recorded or live input.

pub mod config;
pub mod detect;
pub mod dsp;
pub mod gate;
pub mod live;
pub mod replay;
pub mod synth;
pub mod trace;

pub use config::{AppConfig, ConfigError, DetectorSettings};
pub use detect::{
    calibrate_threshold, calibration_report, mahalanobis, session_stats, step, warmup,
    AnomalyStreak, CalibrationOutcome, DetectError, DetectorConfig, DetectorState, MotionEvent,
    SessionStats, Verdict,
};
pub use dsp::{
    butterworth_apply, butterworth_design, ema_filter, filter_columns, median_filter, pca_fit,
    pca_project, process_stream, project_rows, Biquad, DspError, FeatureSample, PcaBasis,
    PipelineConfig, PipelineOrder, SosFilter,
};
pub use gate::{
    check_command, gate_step, CommandDecision, DaemonConfig, GateChange, GateError, GateMode,
    GateState,
};
pub use live::{
    run_live, FrameSource, LiveOptions, LiveReport, ReplayLoopSource, SyntheticSource,
};
pub use replay::{
    run_replay, score_sessions, EventKind, EventRecord, LabelTally, ReplayError, ReplayReport,
};
pub use synth::{
    standard_scenarios, synthesize, synthesize_schedule, ChannelModel, MotionProfile, PathSpec,
    ScenarioPreset, SynthError,
};
pub use trace::{
    csi_amplitude_streams, read_labels, read_trace, write_labels, write_trace, CsiFrame,
    CsiStream, LabelKind, LabelRecord, MotionKind, SessionLabel, TraceError,
};
