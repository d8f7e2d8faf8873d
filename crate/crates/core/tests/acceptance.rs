//! Acceptance gate: one test per release criterion, each printing a single
//! `acceptance <name>: PASS|FAIL` line (visible with `--nocapture`) before
//! asserting. Tolerances are pinned here and nowhere else.

mod common;

use std::time::{Duration, Instant};

use csigate::config::AppConfig;
use csigate::detect::{
    self, calibrate_threshold, mahalanobis, AnomalyStreak, CalibrationOutcome, DetectorConfig,
    MotionEvent, SessionStats,
};
use csigate::dsp::{butterworth_design, ema_filter, median_filter, pca_fit, FeatureSample};
use csigate::replay::run_replay;
use csigate::synth::{standard_scenarios, synthesize_schedule};
use csigate::trace::{
    read_trace, write_trace, CsiFrame, CsiStream, LabelKind, MotionKind, TraceError,
};
use nalgebra::DMatrix;
use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{calibrate_scenarios, label, GEOMETRY, SAMPLE_RATE_HZ};

// ---------------------------------------------------------------------------
// Harness: collect failures, print one verdict line per criterion.

struct Criterion {
    name: &'static str,
    started: Instant,
    failures: Vec<String>,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Criterion {
            name,
            started: Instant::now(),
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: String) {
        if !ok {
            self.failures.push(detail);
        }
    }

    fn finish_within(mut self, budget: Duration) {
        let elapsed = self.started.elapsed();
        self.check(
            elapsed <= budget,
            format!("runtime {elapsed:?} exceeds budget {budget:?}"),
        );
        let pass = self.failures.is_empty();
        println!(
            "acceptance {}: {}",
            self.name,
            if pass { "PASS" } else { "FAIL" }
        );
        assert!(
            pass,
            "acceptance {} failed:\n  {}",
            self.name,
            self.failures.join("\n  ")
        );
    }
}

// ---------------------------------------------------------------------------
// Published per-session maxima, row by row.

const INDOOR_TAGS: [&str; 4] = ["A", "B", "C", "D"];
const OUTDOOR_TAGS: [&str; 6] = ["A'", "B'", "C'", "D'", "M'", "N'"];
const ALL_TAGS: [&str; 10] = ["A", "B", "C", "D", "A'", "B'", "C'", "D'", "M'", "N'"];

fn motion_row(motion: MotionKind, indoor: [f64; 4], outdoor: [f64; 6]) -> Vec<SessionStats> {
    let mut out = Vec::with_capacity(10);
    for (tag, value) in INDOOR_TAGS.iter().zip(indoor) {
        out.push(SessionStats {
            label: label(LabelKind::IndoorMotion, motion, tag),
            max_distance: value,
        });
    }
    for (tag, value) in OUTDOOR_TAGS.iter().zip(outdoor) {
        out.push(SessionStats {
            label: label(LabelKind::OutdoorMotion, motion, tag),
            max_distance: value,
        });
    }
    out
}

struct Fixture {
    indoor: Vec<SessionStats>,
    outdoor: Vec<SessionStats>,
    donothing: Vec<SessionStats>,
}

fn fixture(rows: [(MotionKind, [f64; 4], [f64; 6]); 3], donothing: [f64; 10]) -> Fixture {
    let mut indoor = Vec::new();
    let mut outdoor = Vec::new();
    for (motion, ind, out) in rows {
        for s in motion_row(motion, ind, out) {
            if s.label.kind == LabelKind::IndoorMotion {
                indoor.push(s);
            } else {
                outdoor.push(s);
            }
        }
    }
    let donothing = ALL_TAGS
        .iter()
        .zip(donothing)
        .map(|(tag, value)| SessionStats {
            label: label(LabelKind::NoMotion, MotionKind::None, tag),
            max_distance: value,
        })
        .collect();
    Fixture {
        indoor,
        outdoor,
        donothing,
    }
}

/// Square room, first placement: motion maxima overlap across the wall.
fn square_room_config1() -> Fixture {
    fixture(
        [
            (
                MotionKind::WaveHand,
                [0.218, 0.213, 0.195, 0.191],
                [0.104, 0.101, 0.079, 0.083, 0.156, 0.121],
            ),
            (
                MotionKind::SitDownStandUp,
                [0.277, 0.271, 0.258, 0.253],
                [0.118, 0.113, 0.088, 0.092, 0.238, 0.139],
            ),
            (
                MotionKind::Jump,
                [0.392, 0.391, 0.371, 0.366],
                [0.132, 0.128, 0.099, 0.103, 0.373, 0.165],
            ),
        ],
        [0.026, 0.021, 0.027, 0.024, 0.023, 0.027, 0.028, 0.023, 0.020, 0.023],
    )
}

/// Square room, second placement: cleanly separable.
fn square_room_config2() -> Fixture {
    fixture(
        [
            (
                MotionKind::WaveHand,
                [0.312, 0.315, 0.401, 0.409],
                [0.041, 0.043, 0.049, 0.051, 0.092, 0.063],
            ),
            (
                MotionKind::SitDownStandUp,
                [0.345, 0.349, 0.423, 0.430],
                [0.060, 0.062, 0.069, 0.071, 0.121, 0.089],
            ),
            (
                MotionKind::Jump,
                [0.401, 0.407, 0.451, 0.459],
                [0.069, 0.071, 0.084, 0.086, 0.241, 0.099],
            ),
        ],
        [0.025, 0.021, 0.022, 0.024, 0.028, 0.026, 0.021, 0.022, 0.023, 0.025],
    )
}

/// Rectangular room behind brick walls: widest separation.
fn rectangular_room() -> Fixture {
    fixture(
        [
            (
                MotionKind::WaveHand,
                [0.147, 0.150, 0.180, 0.183],
                [0.020, 0.022, 0.025, 0.027, 0.035, 0.030],
            ),
            (
                MotionKind::SitDownStandUp,
                [0.181, 0.184, 0.216, 0.217],
                [0.024, 0.026, 0.028, 0.029, 0.039, 0.033],
            ),
            (
                MotionKind::Jump,
                [0.254, 0.255, 0.287, 0.288],
                [0.029, 0.029, 0.032, 0.033, 0.042, 0.035],
            ),
        ],
        [0.022, 0.021, 0.022, 0.027, 0.028, 0.026, 0.021, 0.022, 0.020, 0.025],
    )
}

// ---------------------------------------------------------------------------
// Criteria 1-3: calibration over the published fixtures.

#[test]
fn criterion_1_square_config2_threshold() {
    let mut c = Criterion::new("criterion-1-square-config2-threshold");
    let fx = square_room_config2();
    c.check(
        fx.indoor.len() == 12 && fx.outdoor.len() == 18,
        format!(
            "expected 12 indoor / 18 outdoor cells, got {} / {}",
            fx.indoor.len(),
            fx.outdoor.len()
        ),
    );
    match calibrate_threshold(&fx.indoor, &fx.outdoor).expect("well-formed inputs") {
        CalibrationOutcome::Separable { threshold_t, .. } => {
            c.check(
                (threshold_t - 0.2765).abs() <= 1e-12,
                format!("threshold {threshold_t} not within 1e-12 of 0.2765"),
            );
            for s in &fx.indoor {
                c.check(
                    s.max_distance > threshold_t,
                    format!("indoor cell {} ({}) not above threshold", s.label, s.max_distance),
                );
            }
            for s in fx.outdoor.iter().chain(&fx.donothing) {
                c.check(
                    s.max_distance < threshold_t,
                    format!("cell {} ({}) not below threshold", s.label, s.max_distance),
                );
            }
        }
        CalibrationOutcome::NonSeparable { .. } => {
            c.check(false, "expected a separable outcome".into());
        }
    }
    c.finish_within(Duration::from_secs(1));
}

#[test]
fn criterion_2_rectangular_threshold_margin() {
    let mut c = Criterion::new("criterion-2-rectangular-threshold-margin");
    let fx = rectangular_room();
    match calibrate_threshold(&fx.indoor, &fx.outdoor).expect("well-formed inputs") {
        CalibrationOutcome::Separable {
            threshold_t,
            margin,
            ..
        } => {
            c.check(
                (threshold_t - 0.0945).abs() <= 1e-12,
                format!("threshold {threshold_t} not within 1e-12 of 0.0945"),
            );
            c.check(
                (margin - 0.105).abs() <= 1e-12,
                format!("margin {margin} not within 1e-12 of 0.105"),
            );
        }
        CalibrationOutcome::NonSeparable { .. } => {
            c.check(false, "expected a separable outcome".into());
        }
    }
    c.finish_within(Duration::from_secs(1));
}

#[test]
fn criterion_3_square_config1_non_separable() {
    let mut c = Criterion::new("criterion-3-square-config1-non-separable");
    let fx = square_room_config1();
    match calibrate_threshold(&fx.indoor, &fx.outdoor).expect("well-formed inputs") {
        CalibrationOutcome::Separable { threshold_t, .. } => {
            c.check(
                false,
                format!("expected NonSeparable, got threshold {threshold_t}"),
            );
        }
        CalibrationOutcome::NonSeparable {
            dmin_indoor,
            offending_outdoor,
            ..
        } => {
            let wave_at_d = label(LabelKind::IndoorMotion, MotionKind::WaveHand, "D");
            c.check(
                dmin_indoor.label == wave_at_d && (dmin_indoor.max_distance - 0.191).abs() < 1e-15,
                format!(
                    "weakest indoor session is {} ({}), expected {} (0.191)",
                    dmin_indoor.label, dmin_indoor.max_distance, wave_at_d
                ),
            );
            let sit_at_m = label(LabelKind::OutdoorMotion, MotionKind::SitDownStandUp, "M'");
            c.check(
                offending_outdoor
                    .iter()
                    .any(|s| s.label == sit_at_m && (s.max_distance - 0.238).abs() < 1e-15),
                format!(
                    "offending outdoor sessions {:?} do not name {} (0.238)",
                    offending_outdoor
                        .iter()
                        .map(|s| format!("{} ({})", s.label, s.max_distance))
                        .collect::<Vec<_>>(),
                    sit_at_m
                ),
            );
        }
    }
    c.finish_within(Duration::from_secs(1));
}

// ---------------------------------------------------------------------------
// Criterion 4: synthetic end-to-end separation across the scenario grid.

#[test]
fn criterion_4_scenario_separation() {
    let mut c = Criterion::new("criterion-4-scenario-separation");
    let cal = calibrate_scenarios();
    let separable = matches!(cal.outcome, CalibrationOutcome::Separable { .. });
    c.check(
        separable,
        format!("scenario calibration not separable: {:?}", cal.outcome),
    );
    for indoor in &cal.indoor {
        for outdoor in &cal.outdoor {
            c.check(
                indoor.max_distance > outdoor.max_distance,
                format!(
                    "indoor {} ({:.3}) does not exceed outdoor {} ({:.3})",
                    indoor.label, indoor.max_distance, outdoor.label, outdoor.max_distance
                ),
            );
        }
    }
    let min_indoor = cal
        .indoor
        .iter()
        .map(|s| s.max_distance)
        .fold(f64::INFINITY, f64::min);
    let max_outdoor = cal
        .outdoor
        .iter()
        .map(|s| s.max_distance)
        .fold(0.0, f64::max);
    c.check(
        min_indoor / max_outdoor >= 1.5,
        format!(
            "indoor/outdoor ratio {:.3} below 1.5 (min indoor {:.3}, max outdoor {:.3})",
            min_indoor / max_outdoor,
            min_indoor,
            max_outdoor
        ),
    );
    c.finish_within(Duration::from_secs(30));
}

// ---------------------------------------------------------------------------
// Criterion 5: no false alarms over 100 minutes; >= 95 % of indoor
// wave-hand bursts detected.

#[test]
fn criterion_5_false_alarms_and_detection() {
    let mut c = Criterion::new("criterion-5-false-alarms-and-detection");
    let cal = calibrate_scenarios();
    let threshold = cal.outcome.threshold().unwrap_or(f64::NAN);
    c.check(
        threshold.is_finite(),
        "no calibrated threshold available".into(),
    );
    let scenarios = standard_scenarios();
    let mut config = AppConfig::default();
    config.detector.threshold_t = Some(threshold);

    // (a) 100 minutes of quiet with outdoor bursts woven in: zero events.
    let quiet = label(LabelKind::NoMotion, MotionKind::None, "Q");
    let out_wave = label(LabelKind::OutdoorMotion, MotionKind::WaveHand, "A'");
    let out_sit = label(LabelKind::OutdoorMotion, MotionKind::SitDownStandUp, "B'");
    let out_jump = label(LabelKind::OutdoorMotion, MotionKind::Jump, "C'");
    let mut schedule = vec![(quiet.clone(), 60.0)];
    for _ in 0..99 {
        schedule.push((out_wave.clone(), 4.0));
        schedule.push((quiet.clone(), 16.0));
        schedule.push((out_sit.clone(), 4.0));
        schedule.push((quiet.clone(), 16.0));
        schedule.push((out_jump.clone(), 4.0));
        schedule.push((quiet.clone(), 16.0));
    }
    let (stream, records) =
        synthesize_schedule(&scenarios[0].model, &schedule, SAMPLE_RATE_HZ, GEOMETRY)
            .expect("100-minute trace synthesizes");
    c.check(
        stream.frames.len() == 300_000,
        format!("expected 300000 frames, got {}", stream.frames.len()),
    );
    let report = run_replay(&stream, &records, &config).expect("replay succeeds");
    c.check(
        report.motion_events.is_empty(),
        format!(
            "expected zero motion events, got {} (first at {:?})",
            report.motion_events.len(),
            report.motion_events.first().map(|e| e.timestamp_us)
        ),
    );

    // (b) twenty indoor wave-hand bursts: at least 19 must fire an event.
    let wave = scenarios[1].label.clone();
    let quiet_in = label(LabelKind::NoMotion, MotionKind::None, "A");
    let mut schedule = vec![(quiet_in.clone(), 20.0)];
    for _ in 0..20 {
        schedule.push((wave.clone(), 4.0));
        schedule.push((quiet_in.clone(), 16.0));
    }
    let (stream, records) =
        synthesize_schedule(&scenarios[1].model, &schedule, SAMPLE_RATE_HZ, GEOMETRY)
            .expect("burst trace synthesizes");
    let report = run_replay(&stream, &records, &config).expect("replay succeeds");
    let tally = report
        .tallies
        .iter()
        .find(|t| t.label == wave)
        .expect("wave-hand tally present");
    c.check(
        tally.ranges == 20,
        format!("expected 20 labeled bursts, got {}", tally.ranges),
    );
    c.check(
        tally.detected_ranges * 100 >= tally.ranges * 95,
        format!(
            "only {}/{} bursts produced a motion event",
            tally.detected_ranges, tally.ranges
        ),
    );
    c.finish_within(Duration::from_secs(60));
}

// ---------------------------------------------------------------------------
// Criterion 6: oracle equivalence suites.

#[test]
fn criterion_6a_incremental_update_oracle() {
    let mut c = Criterion::new("criterion-6a-incremental-update-oracle");
    const D: usize = 3;
    const WARMUP: usize = 250;
    const STEPS: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    // Correlated draws so the covariance has real structure.
    let a = [[1.0, 0.3, 0.0], [0.2, 0.8, 0.0], [0.0, 0.1, 0.6]];
    let b = [0.5, -1.0, 2.0];
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let z: [f64; D] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        (0..D)
            .map(|i| b[i] + (0..D).map(|j| a[i][j] * z[j]).sum::<f64>())
            .collect()
    };
    let samples: Vec<FeatureSample> = (0..WARMUP + STEPS)
        .map(|k| FeatureSample {
            timestamp_us: k as u64 * 20_000,
            values: draw(&mut rng),
        })
        .collect();

    let config = DetectorConfig {
        alpha: 0.98,
        threshold_t: f64::INFINITY,
        consecutive_count: 10,
        warmup_samples: WARMUP,
    };
    let mut state = detect::warmup(&samples[..WARMUP], &config).expect("warm-up succeeds");

    // Oracle initial values: two-pass batch mean/covariance plus the same
    // relative ridge the detector applies before inverting.
    let mut mean = [0.0f64; D];
    for s in &samples[..WARMUP] {
        for i in 0..D {
            mean[i] += s.values[i];
        }
    }
    for m in &mut mean {
        *m /= WARMUP as f64;
    }
    let mut cov = [[0.0f64; D]; D];
    for s in &samples[..WARMUP] {
        let delta: Vec<f64> = (0..D).map(|i| s.values[i] - mean[i]).collect();
        for i in 0..D {
            for j in 0..D {
                cov[i][j] += delta[i] * delta[j];
            }
        }
    }
    for row in &mut cov {
        for v in row {
            *v /= WARMUP as f64 - 1.0;
        }
    }
    let trace: f64 = (0..D).map(|i| cov[i][i]).sum();
    let epsilon = 1e-9 * trace / D as f64;
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += epsilon;
    }

    let mut worst = 0.0f64;
    for s in &samples[WARMUP..] {
        let (verdict, _, _) = detect::step_full(&mut state, s, &config).expect("step succeeds");
        c.check(
            verdict == detect::Verdict::Normal,
            "infinite threshold must keep every sample on the update path".into(),
        );
        let alpha = config.alpha;
        for i in 0..D {
            mean[i] = alpha * mean[i] + (1.0 - alpha) * s.values[i];
        }
        let delta: Vec<f64> = (0..D).map(|i| s.values[i] - mean[i]).collect();
        for i in 0..D {
            for j in 0..D {
                cov[i][j] = alpha * cov[i][j] + (1.0 - alpha) * (delta[i] * delta[j]);
            }
        }
        for i in 0..D {
            worst = worst.max((state.mean()[i] - mean[i]).abs());
            for j in 0..D {
                worst = worst.max((state.cov()[(i, j)] - cov[i][j]).abs());
            }
        }
    }
    c.check(
        worst < 1e-9,
        format!("incremental state diverged from recurrence oracle by {worst:.3e}"),
    );
    c.finish_within(Duration::from_secs(30));
}

/// Cofactor-expansion inverse, written independently of the linear-algebra
/// crate on purpose.
fn invert_3x3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    assert!(det.abs() > 0.0, "oracle matrix is singular");
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // Cofactor of entry (j, i), transposed into (i, j). The cyclic
            // row/column order absorbs the checkerboard sign.
            let r = [(j + 1) % 3, (j + 2) % 3];
            let c = [(i + 1) % 3, (i + 2) % 3];
            inv[i][j] =
                (m[r[0]][c[0]] * m[r[1]][c[1]] - m[r[0]][c[1]] * m[r[1]][c[0]]) / det;
        }
    }
    inv
}

#[test]
fn criterion_6b_mahalanobis_explicit_inverse_oracle() {
    let mut c = Criterion::new("criterion-6b-mahalanobis-explicit-inverse-oracle");
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Random well-conditioned mixing matrix -> random SPD covariance.
        let mix: [[f64; 3]; 3] = {
            let mut m = [[0.0; 3]; 3];
            for (i, row) in m.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = rng.gen_range(-1.0..1.0) + if i == j { 2.0 } else { 0.0 };
                }
            }
            m
        };
        let offset = [rng.gen_range(-3.0..3.0), 0.0, rng.gen_range(-3.0..3.0)];
        let samples: Vec<FeatureSample> = (0..260)
            .map(|k| {
                let z = [
                    rng.gen_range(-1.0f64..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                FeatureSample {
                    timestamp_us: k as u64,
                    values: (0..3)
                        .map(|i| offset[i] + (0..3).map(|j| mix[i][j] * z[j]).sum::<f64>())
                        .collect(),
                }
            })
            .collect();
        let config = DetectorConfig {
            alpha: 0.98,
            threshold_t: f64::INFINITY,
            consecutive_count: 10,
            warmup_samples: 250,
        };
        let state = detect::warmup(&samples[..250], &config).expect("warm-up succeeds");

        // Oracle works on the state's stored covariance: explicit inverse,
        // explicit quadratic form.
        let mut stored = [[0.0f64; 3]; 3];
        for (i, row) in stored.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = state.cov()[(i, j)];
            }
        }
        let inv = invert_3x3(&stored);
        for probe_idx in 0..5 {
            let probe = FeatureSample {
                timestamp_us: probe_idx,
                values: vec![
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                ],
            };
            let delta: Vec<f64> = (0..3).map(|i| probe.values[i] - state.mean()[i]).collect();
            let mut quad = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    quad += delta[i] * inv[i][j] * delta[j];
                }
            }
            let expected = quad.max(0.0).sqrt();
            let got = mahalanobis(&state, &probe).expect("matching dimensions");
            worst = worst.max((got - expected).abs());
        }
    }
    c.check(
        worst <= 1e-6,
        format!("distance diverged from explicit-inverse oracle by {worst:.3e}"),
    );
    c.finish_within(Duration::from_secs(30));
}

#[test]
fn criterion_6c_median_ema_bruteforce_oracle() {
    let mut c = Criterion::new("criterion-6c-median-ema-bruteforce-oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    for _ in 0..1000 {
        let len = rng.gen_range(6..=200);
        let series: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();

        let window = 2 * rng.gen_range(1..=5) + 1; // odd, 3..=11
        let filtered = median_filter(&series, window).expect("valid window");
        let half = window / 2;
        for (i, &got) in filtered.iter().enumerate() {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(len - 1);
            let mut neighborhood: Vec<f64> = (lo..=hi).map(|j| series[j]).collect();
            // Edge replication: clamped indices repeat the boundary value.
            for _ in 0..half.saturating_sub(i) {
                neighborhood.push(series[0]);
            }
            for _ in 0..(i + half).saturating_sub(len - 1) {
                neighborhood.push(series[len - 1]);
            }
            neighborhood.sort_by(f64::total_cmp);
            let expected = neighborhood[half];
            c.check(
                got.to_bits() == expected.to_bits(),
                format!("median[{i}] = {got} differs from brute-force {expected}"),
            );
        }

        let ema_window = rng.gen_range(1..=40);
        let smoothed = ema_filter(&series, ema_window).expect("valid window");
        let beta = 2.0 / (ema_window as f64 + 1.0);
        let mut y = series[0];
        for (i, &got) in smoothed.iter().enumerate() {
            if i > 0 {
                y = beta * series[i] + (1.0 - beta) * y;
            }
            c.check(
                (got - y).abs() <= 1e-12,
                format!("ema[{i}] = {got} differs from recurrence {y}"),
            );
        }
        if !c.failures.is_empty() {
            break; // one mismatch report is enough
        }
    }
    c.finish_within(Duration::from_secs(30));
}

#[test]
fn criterion_6d_streak_event_run_length_oracle() {
    let mut c = Criterion::new("criterion-6d-streak-event-run-length-oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    for _ in 0..1000 {
        let count = rng.gen_range(1u32..=12);
        let verdicts: Vec<bool> = (0..100).map(|_| rng.gen_bool(0.3)).collect();
        let distances: Vec<f64> = (0..100).map(|_| rng.gen_range(0.1..50.0)).collect();

        let mut streak = AnomalyStreak::new();
        let mut got: Vec<MotionEvent> = Vec::new();
        for (i, &anomaly) in verdicts.iter().enumerate() {
            if let Some(event) = streak.observe(anomaly, distances[i], i as u64, count) {
                got.push(event);
            }
        }

        // Run-length oracle: an event exactly when a run of `true` reaches
        // `count`, carrying the run's maximum distance so far.
        let mut expected: Vec<MotionEvent> = Vec::new();
        let mut run = 0usize;
        let mut run_start = 0usize;
        for (i, &anomaly) in verdicts.iter().enumerate() {
            if anomaly {
                if run == 0 {
                    run_start = i;
                }
                run += 1;
                if run == count as usize {
                    let peak = distances[run_start..=i]
                        .iter()
                        .fold(f64::NEG_INFINITY, |acc, &d| acc.max(d));
                    expected.push(MotionEvent {
                        timestamp_us: i as u64,
                        peak_distance: peak,
                    });
                }
            } else {
                run = 0;
            }
        }
        c.check(
            got == expected,
            format!("events {got:?} differ from run-length oracle {expected:?} (c={count})"),
        );
        if !c.failures.is_empty() {
            break;
        }
    }
    c.finish_within(Duration::from_secs(30));
}

// ---------------------------------------------------------------------------
// Criterion 7: filter response and projection identities.

#[test]
fn criterion_7_filter_and_projection_numerics() {
    let mut c = Criterion::new("criterion-7-filter-and-projection-numerics");
    for (order, cutoff_hz, rate_hz) in [(4, 10.0, 50.0), (2, 5.0, 50.0), (6, 12.0, 50.0), (1, 10.0, 50.0)]
    {
        let filter = butterworth_design(order, cutoff_hz, rate_hz).expect("valid design");
        let dc = filter.magnitude_at(0.0);
        c.check(
            (dc - 1.0).abs() <= 1e-6,
            format!("order {order}: DC gain {dc} not within 1e-6 of 1"),
        );
        let at_cutoff = filter.magnitude_at(cutoff_hz);
        c.check(
            (at_cutoff - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-3,
            format!("order {order}: cutoff gain {at_cutoff} not within 1e-3 of 1/sqrt(2)"),
        );
        let nyquist = rate_hz / 2.0;
        let mut previous = f64::INFINITY;
        for k in 0..256 {
            let f = k as f64 * nyquist / 255.0;
            let magnitude = filter.magnitude_at(f);
            c.check(
                magnitude <= previous + 1e-12,
                format!("order {order}: response rises at {f:.3} Hz ({magnitude} > {previous})"),
            );
            previous = magnitude;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows = 200;
    let cols = 8;
    let data = DMatrix::from_fn(rows, cols, |r, c_| {
        ((r as f64) * 0.1 + c_ as f64).sin() * (1.0 + c_ as f64 * 0.3) + rng.gen_range(-0.5..0.5)
    });
    let basis = pca_fit(&data).expect("fit succeeds");
    let gram = basis.components.transpose() * &basis.components;
    let identity = DMatrix::<f64>::identity(cols, cols);
    let ortho_err = (gram - identity).amax();
    c.check(
        ortho_err <= 1e-9,
        format!("component matrix not orthonormal: max deviation {ortho_err:.3e}"),
    );
    // Independent total variance: two-pass column variances.
    let mut total_var = 0.0;
    for j in 0..cols {
        let mean = data.column(j).sum() / rows as f64;
        let ss: f64 = data.column(j).iter().map(|v| (v - mean).powi(2)).sum();
        total_var += ss / (rows as f64 - 1.0);
    }
    let eigen_sum: f64 = basis.eigenvalues.iter().sum();
    c.check(
        (eigen_sum - total_var).abs() <= 1e-9 * total_var.max(1.0),
        format!("eigenvalue sum {eigen_sum} differs from total variance {total_var}"),
    );
    c.finish_within(Duration::from_secs(30));
}

// ---------------------------------------------------------------------------
// Criterion 8: serialization round-trips and truncation behavior.

fn random_stream(rng: &mut ChaCha8Rng) -> CsiStream {
    let n_tx = rng.gen_range(1u8..=3);
    let n_rx = rng.gen_range(1u8..=3);
    let n_sub = rng.gen_range(1u16..=16);
    let frame_count = rng.gen_range(0usize..=4);
    let rate_millihz = rng.gen_range(1u32..=200_000);
    let mut timestamp = rng.gen_range(0u64..1_000_000);
    let frames = (0..frame_count)
        .map(|_| {
            timestamp += rng.gen_range(1u64..100_000);
            let h = (0..n_sub as usize * n_tx as usize * n_rx as usize)
                .map(|_| {
                    Complex32::new(
                        rng.gen_range(-1.0e6f32..1.0e6),
                        rng.gen_range(-1.0e6f32..1.0e6),
                    )
                })
                .collect();
            CsiFrame {
                timestamp_us: timestamp,
                n_tx,
                n_rx,
                n_sub,
                h,
            }
        })
        .collect();
    CsiStream {
        sample_rate_hz: rate_millihz as f64 / 1000.0,
        frames,
    }
}

#[test]
fn criterion_8_roundtrip_and_truncation() {
    let mut c = Criterion::new("criterion-8-roundtrip-and-truncation");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..1000 {
        let stream = random_stream(&mut rng);
        let mut bytes = Vec::new();
        write_trace(&stream, &mut bytes).expect("write succeeds");
        let reread = read_trace(std::io::Cursor::new(&bytes)).expect("read succeeds");
        let mut rewritten = Vec::new();
        write_trace(&reread, &mut rewritten).expect("rewrite succeeds");
        c.check(
            reread == stream && rewritten == bytes,
            format!("round-trip {i} not bit-exact"),
        );
        if !c.failures.is_empty() {
            break;
        }
    }

    // Three frames of 1x1x4; every strict prefix must be a clean
    // truncation error.
    let frames: Vec<CsiFrame> = (0..3)
        .map(|k| CsiFrame {
            timestamp_us: 1_000 + k * 20_000,
            n_tx: 1,
            n_rx: 1,
            n_sub: 4,
            h: (0..4)
                .map(|s| Complex32::new(k as f32 + s as f32, -(s as f32)))
                .collect(),
        })
        .collect();
    let stream = CsiStream {
        sample_rate_hz: 50.0,
        frames,
    };
    let mut bytes = Vec::new();
    write_trace(&stream, &mut bytes).expect("write succeeds");
    for cut in 0..bytes.len() {
        match read_trace(std::io::Cursor::new(&bytes[..cut])) {
            Err(TraceError::Truncation { .. }) => {}
            Err(other) => c.check(
                false,
                format!("prefix of {cut} bytes gave {other:?}, expected a truncation error"),
            ),
            Ok(_) => c.check(
                false,
                format!("prefix of {cut} bytes silently parsed"),
            ),
        }
        if !c.failures.is_empty() {
            break;
        }
    }
    c.finish_within(Duration::from_secs(30));
}

// ---------------------------------------------------------------------------
// Criterion 9: replay throughput.

#[test]
fn criterion_9_replay_throughput() {
    let mut c = Criterion::new("criterion-9-replay-throughput");
    let scenarios = standard_scenarios();
    let quiet = label(LabelKind::NoMotion, MotionKind::None, "C");
    let schedule = vec![
        (quiet.clone(), 1150.0),
        (scenarios[3].label.clone(), 4.0),
        (quiet, 46.0),
    ];
    let (stream, records) =
        synthesize_schedule(&scenarios[3].model, &schedule, SAMPLE_RATE_HZ, GEOMETRY)
            .expect("throughput trace synthesizes");
    c.check(
        stream.frames.len() == 60_000,
        format!("expected 60000 frames, got {}", stream.frames.len()),
    );
    let mut config = AppConfig::default();
    config.detector.threshold_t = Some(8.0);

    // One warm pass, then the timed pass.
    run_replay(&stream, &records, &config).expect("replay succeeds");
    let started = Instant::now();
    let report = run_replay(&stream, &records, &config).expect("replay succeeds");
    let elapsed = started.elapsed().as_secs_f64();
    let frames_per_s = report.frames as f64 / elapsed;
    c.check(
        frames_per_s >= 50_000.0,
        format!(
            "replay ran {frames_per_s:.0} frames/s over {} frames ({elapsed:.3} s), need >= 50000",
            report.frames
        ),
    );
    c.finish_within(Duration::from_secs(120));
}
