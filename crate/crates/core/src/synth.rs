//! Synthetic multipath channel generator. Each trace is the sum of a few
//! propagation paths — one line-of-sight ray, static reflectors, and movers
//! whose delays oscillate while a labeled motion segment is active — with
//! per-wall amplitude attenuation and additive complex Gaussian noise.
//! Motion on an indoor path (no wall crossings) perturbs the channel far
//! more than the same motion on an attenuated outdoor path, which is the
//! separation the detector downstream relies on.

use num_complex::{Complex32, Complex64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::trace::{CsiFrame, CsiStream, LabelKind, LabelRecord, MotionKind, SessionLabel};

/// Geometry used when none is requested: one tx antenna, one rx antenna,
/// 30 subcarriers.
const DEFAULT_GEOMETRY: (u8, u8, u16) = (1, 1, 30);
/// Raised-cosine ramp applied at both ends of an active motion segment.
const RAMP_S: f64 = 0.15;
/// Pull-back factor of the AR(1) delay jitter, per sample.
const WALK_RHO: f64 = 0.99;
/// RNG stream reserved for per-entry noise (path streams use the path index).
const NOISE_STREAM: u64 = 1000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid channel model: {0}")]
    Model(String),
    #[error("invalid synthesis request: {0}")]
    Config(String),
}

/// How a moving path's delay oscillates: sinusoid amplitude/frequency plus
/// the standard deviation of an AR(1) jitter walk, all in delay units.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionProfile {
    pub kind: MotionKind,
    pub osc_amplitude_ns: f64,
    pub osc_freq_hz: f64,
    pub walk_sigma_ns: f64,
}

impl MotionProfile {
    #[must_use]
    pub fn none() -> Self {
        MotionProfile {
            kind: MotionKind::None,
            osc_amplitude_ns: 0.0,
            osc_freq_hz: 0.0,
            walk_sigma_ns: 0.0,
        }
    }

    /// Weak motion: small, fairly quick delay oscillation.
    #[must_use]
    pub fn wave_hand() -> Self {
        MotionProfile {
            kind: MotionKind::WaveHand,
            osc_amplitude_ns: 0.055,
            osc_freq_hz: 1.2,
            walk_sigma_ns: 0.0025,
        }
    }

    /// Medium motion: larger, slower displacement.
    #[must_use]
    pub fn sit_down_stand_up() -> Self {
        MotionProfile {
            kind: MotionKind::SitDownStandUp,
            osc_amplitude_ns: 0.075,
            osc_freq_hz: 1.0,
            walk_sigma_ns: 0.0035,
        }
    }

    /// Strong motion: the largest and fastest displacement.
    #[must_use]
    pub fn jump() -> Self {
        MotionProfile {
            kind: MotionKind::Jump,
            osc_amplitude_ns: 0.09,
            osc_freq_hz: 1.4,
            walk_sigma_ns: 0.0045,
        }
    }

    #[must_use]
    pub fn for_kind(kind: MotionKind) -> Self {
        match kind {
            MotionKind::None => MotionProfile::none(),
            MotionKind::WaveHand => MotionProfile::wave_hand(),
            MotionKind::SitDownStandUp => MotionProfile::sit_down_stand_up(),
            MotionKind::Jump => MotionProfile::jump(),
        }
    }
}

/// One propagation path: gain, delay, wall crossings, and (for movers) the
/// motion profile that drives its delay.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    /// Unitless gain in (0, 1].
    pub amplitude: f64,
    /// Propagation delay at rest.
    pub delay_ns: f64,
    /// Wall penetrations: 0 for indoor paths, even >= 2 for outdoor
    /// reflectors.
    pub wall_traversals: u32,
    pub moving: bool,
    /// Exactly one path per model carries this flag.
    pub line_of_sight: bool,
    pub motion_profile: MotionProfile,
}

impl PathSpec {
    #[must_use]
    pub fn line_of_sight(amplitude: f64, delay_ns: f64) -> Self {
        PathSpec {
            amplitude,
            delay_ns,
            wall_traversals: 0,
            moving: false,
            line_of_sight: true,
            motion_profile: MotionProfile::none(),
        }
    }

    #[must_use]
    pub fn static_reflector(amplitude: f64, delay_ns: f64, wall_traversals: u32) -> Self {
        PathSpec {
            amplitude,
            delay_ns,
            wall_traversals,
            moving: false,
            line_of_sight: false,
            motion_profile: MotionProfile::none(),
        }
    }

    #[must_use]
    pub fn mover(
        amplitude: f64,
        delay_ns: f64,
        wall_traversals: u32,
        motion_profile: MotionProfile,
    ) -> Self {
        PathSpec {
            amplitude,
            delay_ns,
            wall_traversals,
            moving: true,
            line_of_sight: false,
            motion_profile,
        }
    }
}

/// The full channel: path set, per-wall transmission factor, noise level,
/// subcarrier layout, and the seed that fixes every random draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub paths: Vec<PathSpec>,
    /// Amplitude factor applied once per wall traversal, in (0, 1).
    pub wall_transmission: f64,
    /// Standard deviation of the additive complex noise per CSI entry.
    pub noise_sigma: f64,
    pub subcarrier_spacing_hz: f64,
    pub carrier_hz: f64,
    pub seed: u64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.paths.is_empty() {
            return Err(SynthError::Model("path set is empty".into()));
        }
        let mut los = 0usize;
        for (idx, p) in self.paths.iter().enumerate() {
            if !(p.amplitude > 0.0 && p.amplitude <= 1.0) {
                return Err(SynthError::Model(format!(
                    "path {idx}: amplitude {} outside (0, 1]",
                    p.amplitude
                )));
            }
            if !(p.delay_ns > 0.0 && p.delay_ns.is_finite()) {
                return Err(SynthError::Model(format!(
                    "path {idx}: delay {} ns must be positive",
                    p.delay_ns
                )));
            }
            if p.wall_traversals > 0 && p.wall_traversals % 2 != 0 {
                return Err(SynthError::Model(format!(
                    "path {idx}: outdoor reflectors cross walls an even number of times, got {}",
                    p.wall_traversals
                )));
            }
            if p.moving != (p.motion_profile.kind != MotionKind::None) {
                return Err(SynthError::Model(format!(
                    "path {idx}: moving flag does not match motion profile {}",
                    p.motion_profile.kind
                )));
            }
            if p.moving
                && !(p.motion_profile.osc_amplitude_ns > 0.0
                    && p.motion_profile.osc_freq_hz > 0.0
                    && p.motion_profile.walk_sigma_ns >= 0.0)
            {
                return Err(SynthError::Model(format!(
                    "path {idx}: moving path needs positive oscillation amplitude and frequency"
                )));
            }
            if p.line_of_sight {
                los += 1;
                if p.wall_traversals != 0 || p.moving {
                    return Err(SynthError::Model(
                        "line-of-sight path must be static with zero wall traversals".into(),
                    ));
                }
            }
        }
        if los != 1 {
            return Err(SynthError::Model(format!(
                "exactly one line-of-sight path required, found {los}"
            )));
        }
        if !(self.wall_transmission > 0.0 && self.wall_transmission < 1.0) {
            return Err(SynthError::Model(format!(
                "wall transmission {} outside (0, 1)",
                self.wall_transmission
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::Model(format!(
                "noise sigma {} must be finite and non-negative",
                self.noise_sigma
            )));
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.carrier_hz > 0.0) {
            return Err(SynthError::Model(
                "carrier and subcarrier spacing must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A named (model, label) pairing for the CLI and for end-to-end tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPreset {
    pub name: &'static str,
    pub model: ChannelModel,
    pub label: SessionLabel,
}

/// Does `path` oscillate during a segment with this label? Indoor labels
/// drive movers that cross no walls; outdoor labels drive movers behind
/// walls; the motion kinds must match.
fn path_active(path: &PathSpec, label: &SessionLabel) -> bool {
    if !path.moving {
        return false;
    }
    match label.kind {
        LabelKind::NoMotion => false,
        LabelKind::IndoorMotion => {
            path.wall_traversals == 0 && path.motion_profile.kind == label.motion
        }
        LabelKind::OutdoorMotion => {
            path.wall_traversals > 0 && path.motion_profile.kind == label.motion
        }
    }
}

/// Raised-cosine on/off envelope within one active segment.
fn envelope(t_in_segment: f64, segment_s: f64) -> f64 {
    let up = if t_in_segment < RAMP_S {
        0.5 * (1.0 - (PI * t_in_segment / RAMP_S).cos())
    } else {
        1.0
    };
    let remaining = (segment_s - t_in_segment).max(0.0);
    let down = if remaining < RAMP_S {
        0.5 * (1.0 - (PI * remaining / RAMP_S).cos())
    } else {
        1.0
    };
    up * down
}

fn unit_phasor(freq_hz: f64, tau_ns: f64) -> Complex64 {
    let phase = -TAU * freq_hz * tau_ns * 1e-9;
    Complex64::new(phase.cos(), phase.sin())
}

/// Generate one trace from a sequence of labeled segments, each a
/// `(label, duration_s)` pair, at the given sample rate and antenna
/// geometry. Returns the stream and the matching label sidecar records.
pub fn synthesize_schedule(
    model: &ChannelModel,
    segments: &[(SessionLabel, f64)],
    sample_rate_hz: f64,
    geometry: (u8, u8, u16),
) -> Result<(CsiStream, Vec<LabelRecord>), SynthError> {
    model.validate()?;
    if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
        return Err(SynthError::Config(format!(
            "sample rate {sample_rate_hz} must be positive"
        )));
    }
    if segments.is_empty() {
        return Err(SynthError::Config("no segments requested".into()));
    }
    let (n_tx, n_rx, n_sub) = geometry;
    if n_tx == 0 || n_rx == 0 || n_sub == 0 {
        return Err(SynthError::Config("geometry must be non-zero".into()));
    }
    let mut frame_counts = Vec::with_capacity(segments.len());
    for (label, duration_s) in segments {
        label
            .validate()
            .map_err(|e| SynthError::Config(format!("bad segment label: {e}")))?;
        if !(*duration_s > 0.0 && duration_s.is_finite()) {
            return Err(SynthError::Config(format!(
                "segment duration {duration_s} must be positive"
            )));
        }
        let frames = (duration_s * sample_rate_hz).round() as usize;
        if frames == 0 {
            return Err(SynthError::Config(format!(
                "segment of {duration_s} s is shorter than one sample interval"
            )));
        }
        frame_counts.push(frames);
    }

    let timestamp_us = |k: usize| (k as f64 * 1e6 / sample_rate_hz).round() as u64;

    // Per-subcarrier frequencies and at-rest path phasors (gain included).
    let frequencies: Vec<f64> = (0..n_sub as usize)
        .map(|i| model.carrier_hz + i as f64 * model.subcarrier_spacing_hz)
        .collect();
    let weights: Vec<f64> = model
        .paths
        .iter()
        .map(|p| p.amplitude * model.wall_transmission.powi(p.wall_traversals as i32))
        .collect();
    let rest: Vec<Vec<Complex64>> = model
        .paths
        .iter()
        .zip(&weights)
        .map(|(p, &w)| {
            frequencies
                .iter()
                .map(|&f| w * unit_phasor(f, p.delay_ns))
                .collect()
        })
        .collect();

    // One RNG stream per moving path, plus a dedicated noise stream, so the
    // same seed reproduces the same trajectories regardless of how many
    // entries a frame carries.
    let mut path_rngs: Vec<Option<ChaCha8Rng>> = model
        .paths
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            p.moving.then(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
                rng.set_stream(idx as u64);
                rng
            })
        })
        .collect();
    let mut noise_rng = {
        let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
        rng.set_stream(NOISE_STREAM);
        rng
    };
    let noise = (model.noise_sigma > 0.0).then(|| {
        Normal::new(0.0, model.noise_sigma / std::f64::consts::SQRT_2)
            .expect("finite noise sigma")
    });
    let mut walk: Vec<f64> = vec![0.0; model.paths.len()];

    let total_frames: usize = frame_counts.iter().sum();
    let entries = n_sub as usize * n_tx as usize * n_rx as usize;
    let mut frames: Vec<CsiFrame> = Vec::with_capacity(total_frames);
    let mut records: Vec<LabelRecord> = Vec::with_capacity(segments.len());

    let mut first_frame = 0usize;
    for ((label, _), &count) in segments.iter().zip(&frame_counts) {
        let active: Vec<usize> = (0..model.paths.len())
            .filter(|&p| path_active(&model.paths[p], label))
            .collect();
        let inactive_sum: Vec<Complex64> = (0..n_sub as usize)
            .map(|i| {
                (0..model.paths.len())
                    .filter(|p| !active.contains(p))
                    .map(|p| rest[p][i])
                    .sum()
            })
            .collect();
        let segment_s = count as f64 / sample_rate_hz;

        for k in 0..count {
            let global = first_frame + k;
            let t_seg = k as f64 / sample_rate_hz;

            // Advance every mover's jitter walk on every frame so the
            // trajectory does not depend on the segment layout.
            for (p, spec) in model.paths.iter().enumerate() {
                if let Some(rng) = path_rngs[p].as_mut() {
                    let xi: f64 = rng.sample(StandardNormal);
                    walk[p] = WALK_RHO * walk[p] + spec.motion_profile.walk_sigma_ns * xi;
                }
            }

            let env = envelope(t_seg, segment_s);
            let offsets: Vec<(usize, f64)> = active
                .iter()
                .map(|&p| {
                    let profile = &model.paths[p].motion_profile;
                    // Oscillation is phased from segment start: motion
                    // begins from rest, so every burst onset looks alike.
                    let osc = profile.osc_amplitude_ns
                        * (TAU * profile.osc_freq_hz * t_seg).sin();
                    (p, env * (osc + walk[p]))
                })
                .collect();

            let mut h = Vec::with_capacity(entries);
            for i in 0..n_sub as usize {
                let mut acc = inactive_sum[i];
                for &(p, dtau) in &offsets {
                    acc += weights[p]
                        * unit_phasor(frequencies[i], model.paths[p].delay_ns + dtau);
                }
                for _ in 0..n_tx as usize * n_rx as usize {
                    let mut v = acc;
                    if let Some(dist) = &noise {
                        v.re += noise_rng.sample(dist);
                        v.im += noise_rng.sample(dist);
                    }
                    h.push(Complex32::new(v.re as f32, v.im as f32));
                }
            }
            frames.push(CsiFrame {
                timestamp_us: timestamp_us(global),
                n_tx,
                n_rx,
                n_sub,
                h,
            });
        }

        records.push(LabelRecord {
            start_us: timestamp_us(first_frame),
            end_us: timestamp_us(first_frame + count),
            label: label.clone(),
        });
        first_frame += count;
    }

    let stream = CsiStream {
        sample_rate_hz,
        frames,
    };
    stream
        .validate()
        .map_err(|e| SynthError::Config(format!("generated stream failed validation: {e}")))?;
    Ok((stream, records))
}

/// Single-segment convenience wrapper around [`synthesize_schedule`] at the
/// default 1x1x30 geometry.
pub fn synthesize(
    model: &ChannelModel,
    label: &SessionLabel,
    duration_s: f64,
    sample_rate_hz: f64,
) -> Result<(CsiStream, Vec<LabelRecord>), SynthError> {
    synthesize_schedule(
        model,
        &[(label.clone(), duration_s)],
        sample_rate_hz,
        DEFAULT_GEOMETRY,
    )
}

/// The shared path set behind every preset: line of sight, one piece of
/// static clutter, and one mover per motion kind on each side of the wall.
/// The movers on a side share one delay — the same person at the same spot
/// performing different activities — so every activity on that side
/// perturbs the channel along the same direction and per-range maxima
/// compare by motion vigor alone.
fn composite_paths() -> Vec<PathSpec> {
    vec![
        PathSpec::line_of_sight(1.0, 20.0),
        PathSpec::static_reflector(0.4, 45.0, 0),
        PathSpec::mover(0.8, 60.0, 0, MotionProfile::wave_hand()),
        PathSpec::mover(0.8, 60.0, 0, MotionProfile::sit_down_stand_up()),
        PathSpec::mover(0.8, 60.0, 0, MotionProfile::jump()),
        PathSpec::mover(0.8, 60.0, 0, MotionProfile::jump()),
        PathSpec::mover(0.35, 80.0, 4, MotionProfile::wave_hand()),
        PathSpec::mover(0.35, 80.0, 4, MotionProfile::sit_down_stand_up()),
        PathSpec::mover(0.35, 80.0, 4, MotionProfile::jump()),
        PathSpec::mover(0.35, 80.0, 4, MotionProfile::jump()),
    ]
}

fn composite_model(seed: u64) -> ChannelModel {
    ChannelModel {
        paths: composite_paths(),
        wall_transmission: 0.28,
        noise_sigma: 0.00015,
        subcarrier_spacing_hz: 625e3,
        carrier_hz: 5.32e9,
        seed,
    }
}

/// The seven named presets: one quiet scenario plus each motion kind on the
/// indoor and outdoor side, ordered weak to strong.
#[must_use]
pub fn standard_scenarios() -> Vec<ScenarioPreset> {
    let entries: [(&'static str, u64, LabelKind, MotionKind, &str); 7] = [
        ("no-motion", 101, LabelKind::NoMotion, MotionKind::None, "A"),
        (
            "indoor-wave",
            102,
            LabelKind::IndoorMotion,
            MotionKind::WaveHand,
            "A",
        ),
        (
            "indoor-sit",
            103,
            LabelKind::IndoorMotion,
            MotionKind::SitDownStandUp,
            "B",
        ),
        (
            "indoor-jump",
            104,
            LabelKind::IndoorMotion,
            MotionKind::Jump,
            "C",
        ),
        (
            "outdoor-wave",
            105,
            LabelKind::OutdoorMotion,
            MotionKind::WaveHand,
            "A'",
        ),
        (
            "outdoor-sit",
            106,
            LabelKind::OutdoorMotion,
            MotionKind::SitDownStandUp,
            "B'",
        ),
        (
            "outdoor-jump",
            107,
            LabelKind::OutdoorMotion,
            MotionKind::Jump,
            "C'",
        ),
    ];
    entries
        .into_iter()
        .map(|(name, seed, kind, motion, tag)| ScenarioPreset {
            name,
            model: composite_model(seed),
            label: SessionLabel::new(kind, motion, tag),
        })
        .collect()
}
