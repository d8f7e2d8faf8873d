//! The command gate: a two-state machine that enables the downstream
//! voice interface for a bounded window after each motion event, extends
//! the window on re-triggers, and rejects commands whenever the window has
//! lapsed. Expiry uses the half-open convention [enable, until): at the
//! boundary instant the gate is already closed.

use std::path::PathBuf;
use thiserror::Error;

use crate::detect::MotionEvent;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("invalid daemon configuration: {0}")]
    Config(String),
    #[error("clock moved backwards: now {now_us} us < previous {last_now_us} us")]
    Clock { now_us: u64, last_now_us: u64 },
}

/// Daemon-level settings: probe pacing, gate window, and the optional
/// actuator hook and raw-trace recording path.
#[derive(Debug, Clone, PartialEq)]
pub struct DaemonConfig {
    pub probe_rate_hz: f64,
    pub probe_payload_bytes: u32,
    pub enable_duration_s: f64,
    /// External command run on ENABLE/DISABLE transitions; the literal
    /// `{transition}` is replaced with the transition name.
    pub actuator_command: Option<String>,
    /// When set, the live daemon records ingested frames here.
    pub trace_out: Option<PathBuf>,
}

impl Default for DaemonConfig {
    fn default() -> Self {
        DaemonConfig {
            probe_rate_hz: 50.0,
            probe_payload_bytes: 84,
            enable_duration_s: 60.0,
            actuator_command: None,
            trace_out: None,
        }
    }
}

impl DaemonConfig {
    pub fn validate(&self) -> Result<(), GateError> {
        if !(self.probe_rate_hz > 0.0 && self.probe_rate_hz.is_finite()) {
            return Err(GateError::Config(format!(
                "probe_rate_hz must be positive, got {}",
                self.probe_rate_hz
            )));
        }
        if self.probe_payload_bytes == 0 {
            return Err(GateError::Config("probe_payload_bytes must be > 0".into()));
        }
        if !(self.enable_duration_s > 0.0 && self.enable_duration_s.is_finite()) {
            return Err(GateError::Config(format!(
                "enable_duration_s must be positive, got {}",
                self.enable_duration_s
            )));
        }
        Ok(())
    }

    /// Offered probe load in bits per second, both directions each.
    #[must_use]
    pub fn offered_load_bps(&self) -> f64 {
        self.probe_rate_hz * self.probe_payload_bytes as f64 * 8.0
    }

    #[must_use]
    pub fn enable_duration_us(&self) -> u64 {
        (self.enable_duration_s * 1e6).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateMode {
    #[default]
    Disabled,
    Enabled,
}

/// State changes produced by [`gate_step`], in the order they occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateChange {
    /// The gate opened; commands are accepted until `until_us`.
    Enabled { until_us: u64 },
    /// A re-trigger pushed the expiry of an already-open gate.
    Extended { until_us: u64 },
    /// The window lapsed.
    Disabled,
}

/// Snapshot of the gate. `enabled_until_us` is meaningful only while
/// enabled.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateState {
    pub mode: GateMode,
    pub enabled_until_us: u64,
    pub last_event: Option<MotionEvent>,
    last_now_us: Option<u64>,
}

impl GateState {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }
}

/// Advance the gate to `now_us`, applying expiry first and then the motion
/// event, if any. Returns the new state plus the ordered list of changes
/// (an expiry and a re-enable can occur in the same step).
pub fn gate_step(
    state: &GateState,
    now_us: u64,
    event: Option<&MotionEvent>,
    config: &DaemonConfig,
) -> Result<(GateState, Vec<GateChange>), GateError> {
    config.validate()?;
    if let Some(last) = state.last_now_us {
        if now_us < last {
            return Err(GateError::Clock {
                now_us,
                last_now_us: last,
            });
        }
    }
    let mut next = state.clone();
    next.last_now_us = Some(now_us);
    let mut changes = Vec::new();

    if next.mode == GateMode::Enabled && now_us >= next.enabled_until_us {
        next.mode = GateMode::Disabled;
        changes.push(GateChange::Disabled);
    }

    if let Some(event) = event {
        let until = event.timestamp_us + config.enable_duration_us();
        match next.mode {
            GateMode::Disabled => {
                next.mode = GateMode::Enabled;
                next.enabled_until_us = until;
                changes.push(GateChange::Enabled { until_us: until });
            }
            GateMode::Enabled => {
                if until > next.enabled_until_us {
                    next.enabled_until_us = until;
                    changes.push(GateChange::Extended { until_us: until });
                }
            }
        }
        next.last_event = Some(event.clone());
    }

    Ok((next, changes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandDecision {
    Accept,
    Reject,
}

/// Would a voice command at `now_us` be let through?
#[must_use]
pub fn check_command(state: &GateState, now_us: u64) -> CommandDecision {
    if state.mode == GateMode::Enabled && now_us < state.enabled_until_us {
        CommandDecision::Accept
    } else {
        CommandDecision::Reject
    }
}
