//! Streaming outlier detection: a Mahalanobis-distance baseline seeded from
//! a motion-free warm-up window, updated with a forgetting factor on quiet
//! samples and frozen during anomaly streaks, plus the session-statistics
//! and threshold-calibration procedures built on top of it.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dsp::FeatureSample;
use crate::trace::{LabelKind, LabelRecord, SessionLabel};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Geometry { expected: usize, actual: usize },
    #[error("no label covers sample at {timestamp_us} us")]
    LabelCoverage { timestamp_us: u64 },
}

/// Detector tunables.
///
/// `threshold_t` is the Mahalanobis cutoff (set by calibration),
/// `consecutive_count` the anomaly streak length that constitutes a motion
/// event, and `warmup_samples` the number of leading samples consumed to
/// seed the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub alpha: f64,
    pub threshold_t: f64,
    pub consecutive_count: u32,
    pub warmup_samples: usize,
}

impl DetectorConfig {
    /// Stock deployment defaults around an explicit threshold.
    #[must_use]
    pub fn with_threshold(threshold_t: f64) -> Self {
        DetectorConfig {
            alpha: 0.98,
            threshold_t,
            consecutive_count: 10,
            warmup_samples: 250,
        }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(DetectError::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.threshold_t > 0.0) {
            return Err(DetectError::Config(format!(
                "threshold_t must be positive, got {}",
                self.threshold_t
            )));
        }
        if self.consecutive_count < 1 {
            return Err(DetectError::Config("consecutive_count must be >= 1".into()));
        }
        Ok(())
    }
}

/// Either side of the anomaly threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Normal,
    Anomaly,
}

/// Raised when an anomaly streak reaches the configured length.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionEvent {
    /// Timestamp of the sample that completed the streak.
    pub timestamp_us: u64,
    /// Largest distance observed over the streak so far.
    pub peak_distance: f64,
}

/// Consecutive-anomaly bookkeeping: counts a streak, tracks its peak
/// distance, and fires exactly one event when the streak first reaches
/// `consecutive_count`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnomalyStreak {
    count: u32,
    peak: f64,
}

impl AnomalyStreak {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    #[must_use]
    pub fn count(&self) -> u32 {
        self.count
    }

    /// Feed one verdict; returns the motion event if this observation is the
    /// `consecutive_count`-th anomaly in a row.
    pub fn observe(
        &mut self,
        anomaly: bool,
        distance: f64,
        timestamp_us: u64,
        consecutive_count: u32,
    ) -> Option<MotionEvent> {
        if !anomaly {
            self.count = 0;
            self.peak = 0.0;
            return None;
        }
        self.count += 1;
        self.peak = if self.count == 1 {
            distance
        } else {
            self.peak.max(distance)
        };
        (self.count == consecutive_count).then(|| MotionEvent {
            timestamp_us,
            peak_distance: self.peak,
        })
    }
}

/// The adaptive baseline: mean, covariance, and its inverse, plus streak
/// state. Mutated only through [`step`].
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    cov_inverse: DMatrix<f64>,
    samples_seen: u64,
    streak: AnomalyStreak,
    frozen: bool,
}

impl DetectorState {
    #[must_use]
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    #[must_use]
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    #[must_use]
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    #[must_use]
    pub fn cov_inverse(&self) -> &DMatrix<f64> {
        &self.cov_inverse
    }

    #[must_use]
    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    /// Current consecutive-anomaly count.
    #[must_use]
    pub fn streak(&self) -> u32 {
        self.streak.count()
    }

    /// True while an anomaly streak suspends baseline updates.
    #[must_use]
    pub fn frozen(&self) -> bool {
        self.frozen
    }
}

/// Invert a covariance after adding the relative ridge `eps * trace/d`, and
/// verify the product lands on the identity.
fn regularize_and_invert(
    cov: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DetectError> {
    let d = cov.nrows();
    let epsilon = 1e-9 * cov.trace() / d as f64;
    let mut reg = cov.clone();
    for i in 0..d {
        reg[(i, i)] += epsilon;
    }
    let inverse = reg.clone().try_inverse().ok_or_else(|| {
        DetectError::DegenerateBaseline("covariance is not invertible".into())
    })?;
    let residual = (&reg * &inverse - DMatrix::<f64>::identity(d, d)).amax();
    if !residual.is_finite() || residual > 1e-6 {
        return Err(DetectError::DegenerateBaseline(format!(
            "covariance inversion residual {residual:.3e} exceeds 1e-6"
        )));
    }
    Ok((reg, inverse))
}

/// Seed the baseline from the first `config.warmup_samples` samples using
/// the batch mean/covariance formulas; samples are assumed motion-free.
pub fn warmup(samples: &[FeatureSample], config: &DetectorConfig) -> Result<DetectorState, DetectError> {
    config.validate()?;
    let d = samples
        .first()
        .map(|s| s.values.len())
        .ok_or_else(|| DetectError::Config("no warm-up samples supplied".into()))?;
    if config.warmup_samples < d + 2 {
        return Err(DetectError::Config(format!(
            "warmup_samples {} must be at least d + 2 = {}",
            config.warmup_samples,
            d + 2
        )));
    }
    if samples.len() < config.warmup_samples {
        return Err(DetectError::Config(format!(
            "need {} warm-up samples, got {}",
            config.warmup_samples,
            samples.len()
        )));
    }
    let window = &samples[..config.warmup_samples];
    let n = window.len();
    for s in window {
        if s.values.len() != d {
            return Err(DetectError::Geometry {
                expected: d,
                actual: s.values.len(),
            });
        }
    }

    let mut mean = DVector::zeros(d);
    for s in window {
        mean += DVector::from_row_slice(&s.values);
    }
    mean /= n as f64;

    let mut cov = DMatrix::zeros(d, d);
    let mut scale = 0.0f64;
    for s in window {
        let delta = DVector::from_row_slice(&s.values) - &mean;
        cov += &delta * delta.transpose();
        scale = s.values.iter().fold(scale, |acc, v| acc.max(v.abs()));
    }
    cov /= n as f64 - 1.0;

    if cov.trace() <= scale * scale * 1e-26 {
        return Err(DetectError::DegenerateBaseline(
            "zero covariance: warm-up samples are identical".into(),
        ));
    }
    let (cov, cov_inverse) = regularize_and_invert(&cov)?;

    Ok(DetectorState {
        mean,
        cov,
        cov_inverse,
        samples_seen: n as u64,
        streak: AnomalyStreak::new(),
        frozen: false,
    })
}

/// Mahalanobis distance of `r` from the current baseline.
pub fn mahalanobis(state: &DetectorState, r: &FeatureSample) -> Result<f64, DetectError> {
    if r.values.len() != state.dim() {
        return Err(DetectError::Geometry {
            expected: state.dim(),
            actual: r.values.len(),
        });
    }
    let delta = DVector::from_row_slice(&r.values) - &state.mean;
    let quad = delta.dot(&(&state.cov_inverse * &delta));
    Ok(quad.max(0.0).sqrt())
}

/// One detector step. Anomalies (distance above threshold) extend the streak
/// and freeze the baseline; quiet samples reset the streak and fold the
/// sample into mean and covariance with the forgetting factor.
pub fn step(
    state: &mut DetectorState,
    r: &FeatureSample,
    config: &DetectorConfig,
) -> Result<(Verdict, Option<MotionEvent>), DetectError> {
    let (verdict, event, _) = step_full(state, r, config)?;
    Ok((verdict, event))
}

/// As [`step`], but also returns the distance that decided the verdict.
pub fn step_full(
    state: &mut DetectorState,
    r: &FeatureSample,
    config: &DetectorConfig,
) -> Result<(Verdict, Option<MotionEvent>, f64), DetectError> {
    let distance = mahalanobis(state, r)?;
    state.samples_seen += 1;
    if distance > config.threshold_t {
        let event = state
            .streak
            .observe(true, distance, r.timestamp_us, config.consecutive_count);
        state.frozen = true;
        return Ok((Verdict::Anomaly, event, distance));
    }

    state.streak.observe(false, distance, r.timestamp_us, config.consecutive_count);
    state.frozen = false;
    let alpha = config.alpha;
    let x = DVector::from_row_slice(&r.values);
    state.mean = alpha * &state.mean + (1.0 - alpha) * &x;
    let delta = x - &state.mean;
    state.cov = alpha * &state.cov + (1.0 - alpha) * (&delta * delta.transpose());
    let inverse = state.cov.clone().try_inverse().ok_or_else(|| {
        DetectError::DegenerateBaseline("covariance collapsed during adaptation".into())
    })?;
    state.cov_inverse = inverse;
    Ok((Verdict::Normal, None, distance))
}

/// Per-session maximum distance, as used for calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionStats {
    pub label: SessionLabel,
    pub max_distance: f64,
}

/// Walk labeled samples through [`step`] and report the maximum distance per
/// labeled range. Every sample must fall inside some label record.
pub fn session_stats(
    samples: &[FeatureSample],
    labels: &[LabelRecord],
    mut state: DetectorState,
    config: &DetectorConfig,
) -> Result<Vec<SessionStats>, DetectError> {
    let mut stats: Vec<SessionStats> = labels
        .iter()
        .map(|rec| SessionStats {
            label: rec.label.clone(),
            max_distance: 0.0,
        })
        .collect();
    let mut cursor = 0usize;
    for sample in samples {
        while cursor < labels.len() && sample.timestamp_us >= labels[cursor].end_us {
            cursor += 1;
        }
        if cursor >= labels.len() || !labels[cursor].contains(sample.timestamp_us) {
            return Err(DetectError::LabelCoverage {
                timestamp_us: sample.timestamp_us,
            });
        }
        let (_, _, distance) = step_full(&mut state, sample, config)?;
        if distance > stats[cursor].max_distance {
            stats[cursor].max_distance = distance;
        }
    }
    Ok(stats)
}

/// Result of threshold calibration: either a usable threshold with its
/// margin, or a report naming the sessions that prevent separation.
#[derive(Debug, Clone, PartialEq)]
pub enum CalibrationOutcome {
    Separable {
        threshold_t: f64,
        margin: f64,
        dmin_indoor: SessionStats,
        dmax_outdoor: SessionStats,
    },
    NonSeparable {
        dmin_indoor: SessionStats,
        dmax_outdoor: SessionStats,
        /// Indoor sessions whose maxima do not exceed the strongest outdoor
        /// session.
        offending_indoor: Vec<SessionStats>,
        /// Outdoor sessions whose maxima reach the weakest indoor session.
        offending_outdoor: Vec<SessionStats>,
    },
}

impl CalibrationOutcome {
    #[must_use]
    pub fn threshold(&self) -> Option<f64> {
        match self {
            CalibrationOutcome::Separable { threshold_t, .. } => Some(*threshold_t),
            CalibrationOutcome::NonSeparable { .. } => None,
        }
    }
}

/// Pick the threshold halfway between the weakest indoor session maximum and
/// the strongest outdoor session maximum; report non-separability when the
/// two overlap.
pub fn calibrate_threshold(
    indoor_stats: &[SessionStats],
    outdoor_stats: &[SessionStats],
) -> Result<CalibrationOutcome, DetectError> {
    if indoor_stats.is_empty() {
        return Err(DetectError::Config("no indoor sessions supplied".into()));
    }
    if outdoor_stats.is_empty() {
        return Err(DetectError::Config("no outdoor sessions supplied".into()));
    }
    for s in indoor_stats {
        if s.label.kind != LabelKind::IndoorMotion {
            return Err(DetectError::Config(format!(
                "indoor set contains a {} session ({})",
                s.label.kind, s.label
            )));
        }
    }
    for s in outdoor_stats {
        if s.label.kind != LabelKind::OutdoorMotion {
            return Err(DetectError::Config(format!(
                "outdoor set contains a {} session ({})",
                s.label.kind, s.label
            )));
        }
    }

    let dmin_indoor = indoor_stats
        .iter()
        .min_by(|a, b| a.max_distance.total_cmp(&b.max_distance))
        .unwrap()
        .clone();
    let dmax_outdoor = outdoor_stats
        .iter()
        .max_by(|a, b| a.max_distance.total_cmp(&b.max_distance))
        .unwrap()
        .clone();

    if dmin_indoor.max_distance > dmax_outdoor.max_distance {
        Ok(CalibrationOutcome::Separable {
            threshold_t: (dmin_indoor.max_distance + dmax_outdoor.max_distance) / 2.0,
            margin: dmin_indoor.max_distance - dmax_outdoor.max_distance,
            dmin_indoor,
            dmax_outdoor,
        })
    } else {
        let offending_indoor = indoor_stats
            .iter()
            .filter(|s| s.max_distance <= dmax_outdoor.max_distance)
            .cloned()
            .collect();
        let offending_outdoor = outdoor_stats
            .iter()
            .filter(|s| s.max_distance >= dmin_indoor.max_distance)
            .cloned()
            .collect();
        Ok(CalibrationOutcome::NonSeparable {
            dmin_indoor,
            dmax_outdoor,
            offending_indoor,
            offending_outdoor,
        })
    }
}

/// Render the calibration result and all per-session maxima as the report
/// text persisted next to the config.
#[must_use]
pub fn calibration_report(
    outcome: &CalibrationOutcome,
    indoor_stats: &[SessionStats],
    outdoor_stats: &[SessionStats],
) -> String {
    let mut out = String::new();
    match outcome {
        CalibrationOutcome::Separable {
            threshold_t,
            margin,
            dmin_indoor,
            dmax_outdoor,
        } => {
            out.push_str("calibration: SEPARABLE\n");
            out.push_str(&format!(
                "dmin_indoor={:.6} session={}\n",
                dmin_indoor.max_distance, dmin_indoor.label
            ));
            out.push_str(&format!(
                "dmax_outdoor={:.6} session={}\n",
                dmax_outdoor.max_distance, dmax_outdoor.label
            ));
            out.push_str(&format!("threshold_t={threshold_t:.6}\n"));
            out.push_str(&format!("margin={margin:.6}\n"));
        }
        CalibrationOutcome::NonSeparable {
            dmin_indoor,
            dmax_outdoor,
            offending_indoor,
            offending_outdoor,
        } => {
            out.push_str("calibration: NON_SEPARABLE\n");
            out.push_str(&format!(
                "dmin_indoor={:.6} session={}\n",
                dmin_indoor.max_distance, dmin_indoor.label
            ));
            out.push_str(&format!(
                "dmax_outdoor={:.6} session={}\n",
                dmax_outdoor.max_distance, dmax_outdoor.label
            ));
            for s in offending_indoor {
                out.push_str(&format!(
                    "offending indoor session={} max_distance={:.6}\n",
                    s.label, s.max_distance
                ));
            }
            for s in offending_outdoor {
                out.push_str(&format!(
                    "offending outdoor session={} max_distance={:.6}\n",
                    s.label, s.max_distance
                ));
            }
        }
    }
    out.push_str("per-session maxima:\n");
    for s in indoor_stats.iter().chain(outdoor_stats) {
        out.push_str(&format!(
            "session {} max_distance={:.6}\n",
            s.label, s.max_distance
        ));
    }
    out
}
