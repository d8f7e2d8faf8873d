//! Helpers shared by the integration-test targets: feature extraction
//! through the public API and the standard-scenario calibration recipe.

#![allow(dead_code)]

use csigate::detect::{self, CalibrationOutcome, DetectorConfig, SessionStats};
use csigate::dsp::{
    filter_columns, pca_fit, project_rows, FeatureSample, PipelineConfig, PipelineOrder,
};
use csigate::synth::{standard_scenarios, synthesize_schedule, ScenarioPreset};
use csigate::trace::{
    csi_amplitude_streams, CsiStream, LabelKind, LabelRecord, MotionKind, SessionLabel,
};

pub const SAMPLE_RATE_HZ: f64 = 50.0;
pub const GEOMETRY: (u8, u8, u16) = (1, 1, 30);
pub const LEAD_S: f64 = 6.0;
pub const SESSION_S: f64 = 20.0;

/// Detector settings for measuring session maxima before a threshold
/// exists: an infinite cutoff keeps every sample on the adaptive path.
pub fn provisional_config() -> DetectorConfig {
    DetectorConfig {
        alpha: 0.98,
        threshold_t: f64::INFINITY,
        consecutive_count: 10,
        warmup_samples: 250,
    }
}

/// Offline smoothing + projection with the basis fitted on the first
/// `warmup` rows, mirroring what replay does internally.
pub fn extract_features(
    stream: &CsiStream,
    pipeline: &PipelineConfig,
    warmup: usize,
) -> Vec<FeatureSample> {
    let mut config = pipeline.clone();
    config.sample_rate_hz = stream.sample_rate_hz;
    let amplitudes = csi_amplitude_streams(stream).expect("stream has frames");
    assert!(
        warmup <= amplitudes.nrows(),
        "trace shorter than warm-up window"
    );
    let projected = match config.pipeline_order {
        PipelineOrder::FilterFirst => {
            let filtered = filter_columns(&amplitudes, &config).expect("filtering succeeds");
            let basis =
                pca_fit(&filtered.rows(0, warmup).into_owned()).expect("basis fit succeeds");
            project_rows(&basis, &filtered, &config.pca_keep).expect("projection succeeds")
        }
        PipelineOrder::PcaFirst => {
            let basis =
                pca_fit(&amplitudes.rows(0, warmup).into_owned()).expect("basis fit succeeds");
            let projected =
                project_rows(&basis, &amplitudes, &config.pca_keep).expect("projection succeeds");
            filter_columns(&projected, &config).expect("filtering succeeds")
        }
    };
    stream
        .frames
        .iter()
        .zip(projected.row_iter())
        .map(|(frame, row)| FeatureSample {
            timestamp_us: frame.timestamp_us,
            values: row.iter().cloned().collect(),
        })
        .collect()
}

/// One preset driven through warm-up and session scoring.
pub struct PresetRun {
    pub name: &'static str,
    /// Maximum distance over the post-warm-up part of the quiet lead.
    pub quiet: SessionStats,
    /// Maximum distance over the preset's own 20 s session.
    pub session: SessionStats,
}

/// Score one preset: quiet lead for warm-up, then the preset's session.
pub fn run_preset(preset: &ScenarioPreset, lead_s: f64, session_s: f64) -> PresetRun {
    let quiet = SessionLabel::new(
        LabelKind::NoMotion,
        MotionKind::None,
        preset.label.location_tag.clone(),
    );
    let schedule = [(quiet, lead_s), (preset.label.clone(), session_s)];
    let (stream, records) =
        synthesize_schedule(&preset.model, &schedule, SAMPLE_RATE_HZ, GEOMETRY)
            .expect("preset synthesizes");
    let config = provisional_config();
    let pipeline = PipelineConfig::default();
    let features = extract_features(&stream, &pipeline, config.warmup_samples);
    let state = detect::warmup(&features[..config.warmup_samples], &config)
        .expect("warm-up succeeds on quiet lead");
    let stats = detect::session_stats(
        &features[config.warmup_samples..],
        &records,
        state,
        &config,
    )
    .expect("labels cover the trace");
    PresetRun {
        name: preset.name,
        quiet: stats[0].clone(),
        session: stats[1].clone(),
    }
}

/// All seven standard scenarios scored with the default lead/session split.
pub fn scenario_runs() -> Vec<PresetRun> {
    standard_scenarios()
        .iter()
        .map(|preset| run_preset(preset, LEAD_S, SESSION_S))
        .collect()
}

/// Calibration over the standard scenarios.
pub struct ScenarioCalibration {
    pub outcome: CalibrationOutcome,
    pub indoor: Vec<SessionStats>,
    pub outdoor: Vec<SessionStats>,
    pub runs: Vec<PresetRun>,
}

pub fn calibrate_scenarios() -> ScenarioCalibration {
    let runs = scenario_runs();
    let indoor: Vec<SessionStats> = runs[1..4].iter().map(|r| r.session.clone()).collect();
    let outdoor: Vec<SessionStats> = runs[4..7].iter().map(|r| r.session.clone()).collect();
    let outcome =
        detect::calibrate_threshold(&indoor, &outdoor).expect("well-formed calibration inputs");
    ScenarioCalibration {
        outcome,
        indoor,
        outdoor,
        runs,
    }
}

/// Build a label record list helper for hand-made schedules.
pub fn label(kind: LabelKind, motion: MotionKind, tag: &str) -> SessionLabel {
    SessionLabel::new(kind, motion, tag)
}

/// One deployment exercising every activity on both sides of the wall, the
/// way the per-room reports are organized: quiet lead for warm-up, a clean
/// measured quiet range, then each activity with recovery gaps between.
/// Recovery gaps carry their own tag so filter tails and baseline
/// re-adaptation after a burst do not contaminate the quiet statistic.
pub fn grid_schedule() -> Schedule {
    let quiet_lead = label(LabelKind::NoMotion, MotionKind::None, "L");
    let quiet = label(LabelKind::NoMotion, MotionKind::None, "Q");
    let recovery = label(LabelKind::NoMotion, MotionKind::None, "R");
    let mut schedule: Schedule = vec![(quiet_lead, 6.0), (quiet, 8.0)];
    let activities = [
        (LabelKind::IndoorMotion, MotionKind::WaveHand, "A"),
        (LabelKind::IndoorMotion, MotionKind::SitDownStandUp, "A"),
        (LabelKind::IndoorMotion, MotionKind::Jump, "A"),
        (LabelKind::OutdoorMotion, MotionKind::WaveHand, "A'"),
        (LabelKind::OutdoorMotion, MotionKind::SitDownStandUp, "A'"),
        (LabelKind::OutdoorMotion, MotionKind::Jump, "A'"),
    ];
    for (kind, motion, tag) in activities {
        schedule.push((label(kind, motion, tag), 6.0));
        schedule.push((recovery.clone(), 8.0));
    }
    schedule
}

/// Synthesize and score one hand-made schedule on the first indoor preset's
/// channel, returning one statistic per distinct label.
pub fn run_schedule(schedule: &Schedule) -> Vec<SessionStats> {
    let model = &standard_scenarios()[1].model;
    let (stream, records) =
        synthesize_schedule(model, schedule, SAMPLE_RATE_HZ, GEOMETRY).expect("schedule synthesizes");
    let config = provisional_config();
    let pipeline = PipelineConfig::default();
    let features = extract_features(&stream, &pipeline, config.warmup_samples);
    let state = detect::warmup(&features[..config.warmup_samples], &config)
        .expect("warm-up succeeds on quiet lead");
    detect::session_stats(
        &features[config.warmup_samples..],
        &records,
        state,
        &config,
    )
    .expect("labels cover the trace")
}

/// Quick alias used by several targets.
pub type Schedule = Vec<(SessionLabel, f64)>;

/// Records → sanity helper: total trace frames.
pub fn record_span_us(records: &[LabelRecord]) -> u64 {
    records.last().map(|r| r.end_us).unwrap_or(0) - records.first().map(|r| r.start_us).unwrap_or(0)
}
