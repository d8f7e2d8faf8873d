//! Benchmark helpers: canned inputs shared by the criterion targets.

use csigate::synth::{standard_scenarios, synthesize_schedule};
use csigate::trace::{CsiStream, LabelKind, LabelRecord, MotionKind, SessionLabel};

/// A deterministic mixed trace: quiet lead, one indoor burst, quiet tail.
#[must_use]
pub fn bench_stream(duration_s: f64, sample_rate_hz: f64) -> (CsiStream, Vec<LabelRecord>) {
    let scenarios = standard_scenarios();
    let jump = &scenarios[3];
    let quiet = SessionLabel::new(LabelKind::NoMotion, MotionKind::None, "A");
    let lead = (duration_s * 0.5).max(6.0);
    let burst = 4.0_f64.min(duration_s * 0.2).max(1.0);
    let tail = (duration_s - lead - burst).max(1.0);
    let schedule = [
        (quiet.clone(), lead),
        (jump.label.clone(), burst),
        (quiet, tail),
    ];
    synthesize_schedule(&jump.model, &schedule, sample_rate_hz, (1, 1, 30))
        .expect("benchmark stream synthesizes")
}
