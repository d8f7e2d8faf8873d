//! Flat `key=value` configuration covering the pipeline, detector, and
//! daemon settings, with a renderer that round-trips. Unknown keys are
//! rejected so typos fail loudly instead of silently running defaults.

use std::path::PathBuf;
use thiserror::Error;

use crate::detect::DetectorConfig;
use crate::dsp::{PipelineConfig, PipelineOrder};
use crate::gate::DaemonConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("missing required setting: {0}")]
    Missing(&'static str),
}

/// Detector settings as configured; `threshold_t` stays empty until
/// calibration fills it in.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSettings {
    pub alpha: f64,
    pub threshold_t: Option<f64>,
    pub consecutive_count: u32,
    pub warmup_samples: usize,
}

impl Default for DetectorSettings {
    fn default() -> Self {
        DetectorSettings {
            alpha: 0.98,
            threshold_t: None,
            consecutive_count: 10,
            warmup_samples: 250,
        }
    }
}

impl DetectorSettings {
    /// The runnable detector configuration; errs until a threshold exists.
    pub fn to_detector_config(&self) -> Result<DetectorConfig, ConfigError> {
        let threshold_t = self.threshold_t.ok_or(ConfigError::Missing("threshold_t"))?;
        Ok(DetectorConfig {
            alpha: self.alpha,
            threshold_t,
            consecutive_count: self.consecutive_count,
            warmup_samples: self.warmup_samples,
        })
    }

    /// Detector configuration for calibration runs: with an infinite
    /// threshold every sample reads NORMAL, so distances are collected while
    /// the baseline adapts normally.
    #[must_use]
    pub fn provisional_detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            alpha: self.alpha,
            threshold_t: f64::INFINITY,
            consecutive_count: self.consecutive_count,
            warmup_samples: self.warmup_samples,
        }
    }
}

/// Everything the binaries need, grouped by stage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AppConfig {
    pub pipeline: PipelineConfig,
    pub detector: DetectorSettings,
    pub daemon: DaemonConfig,
}

impl AppConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.daemon
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.detector.alpha > 0.0 && self.detector.alpha < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.detector.alpha
            )));
        }
        if self.detector.consecutive_count < 1 {
            return Err(ConfigError::Invalid(
                "consecutive_count must be >= 1".into(),
            ));
        }
        if self.detector.warmup_samples < 2 {
            return Err(ConfigError::Invalid("warmup_samples must be >= 2".into()));
        }
        if let Some(t) = self.detector.threshold_t {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "threshold_t must be positive and finite, got {t}"
                )));
            }
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(value: &str, line: usize, key: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::Parse {
        line,
        reason: format!("cannot parse {key} value {value:?}"),
    })
}

/// Parse the `key=value` text into a config, starting from defaults.
pub fn parse_str(text: &str) -> Result<AppConfig, ConfigError> {
    let mut config = AppConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            reason: format!("expected key=value, got {trimmed:?}"),
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "median_window" => config.pipeline.median_window = parse_num(value, line, key)?,
            "ema_window" => config.pipeline.ema_window = parse_num(value, line, key)?,
            "butterworth_order" => {
                config.pipeline.butterworth_order = parse_num(value, line, key)?
            }
            "butterworth_cutoff_hz" => {
                config.pipeline.butterworth_cutoff_hz = parse_num(value, line, key)?
            }
            "sample_rate_hz" => config.pipeline.sample_rate_hz = parse_num(value, line, key)?,
            "pca_keep" => {
                let mut keep = Vec::new();
                for part in value.split(',') {
                    keep.push(parse_num(part, line, key)?);
                }
                config.pipeline.pca_keep = keep;
            }
            "pipeline_order" => {
                config.pipeline.pipeline_order =
                    value.parse::<PipelineOrder>().map_err(|e| ConfigError::Parse {
                        line,
                        reason: e.to_string(),
                    })?
            }
            "alpha" => config.detector.alpha = parse_num(value, line, key)?,
            "threshold_t" => config.detector.threshold_t = Some(parse_num(value, line, key)?),
            "consecutive_count" => {
                config.detector.consecutive_count = parse_num(value, line, key)?
            }
            "warmup_samples" => config.detector.warmup_samples = parse_num(value, line, key)?,
            "probe_rate_hz" => config.daemon.probe_rate_hz = parse_num(value, line, key)?,
            "probe_payload_bytes" => {
                config.daemon.probe_payload_bytes = parse_num(value, line, key)?
            }
            "enable_duration_s" => config.daemon.enable_duration_s = parse_num(value, line, key)?,
            "actuator_command" => config.daemon.actuator_command = Some(value.to_string()),
            "trace_out" => config.daemon.trace_out = Some(PathBuf::from(value)),
            other => {
                return Err(ConfigError::Parse {
                    line,
                    reason: format!("unknown key {other:?}"),
                })
            }
        }
    }
    config.validate()?;
    Ok(config)
}

/// Render a config as the same `key=value` text [`parse_str`] accepts.
#[must_use]
pub fn render_str(config: &AppConfig) -> String {
    let mut out = String::new();
    out.push_str("# pipeline\n");
    out.push_str(&format!("median_window={}\n", config.pipeline.median_window));
    out.push_str(&format!("ema_window={}\n", config.pipeline.ema_window));
    out.push_str(&format!(
        "butterworth_order={}\n",
        config.pipeline.butterworth_order
    ));
    out.push_str(&format!(
        "butterworth_cutoff_hz={}\n",
        config.pipeline.butterworth_cutoff_hz
    ));
    out.push_str(&format!("sample_rate_hz={}\n", config.pipeline.sample_rate_hz));
    let keep: Vec<String> = config
        .pipeline
        .pca_keep
        .iter()
        .map(|k| k.to_string())
        .collect();
    out.push_str(&format!("pca_keep={}\n", keep.join(",")));
    out.push_str(&format!("pipeline_order={}\n", config.pipeline.pipeline_order));
    out.push_str("# detector\n");
    out.push_str(&format!("alpha={}\n", config.detector.alpha));
    if let Some(t) = config.detector.threshold_t {
        out.push_str(&format!("threshold_t={t}\n"));
    }
    out.push_str(&format!(
        "consecutive_count={}\n",
        config.detector.consecutive_count
    ));
    out.push_str(&format!("warmup_samples={}\n", config.detector.warmup_samples));
    out.push_str("# daemon\n");
    out.push_str(&format!("probe_rate_hz={}\n", config.daemon.probe_rate_hz));
    out.push_str(&format!(
        "probe_payload_bytes={}\n",
        config.daemon.probe_payload_bytes
    ));
    out.push_str(&format!(
        "enable_duration_s={}\n",
        config.daemon.enable_duration_s
    ));
    if let Some(cmd) = &config.daemon.actuator_command {
        out.push_str(&format!("actuator_command={cmd}\n"));
    }
    if let Some(path) = &config.daemon.trace_out {
        out.push_str(&format!("trace_out={}\n", path.display()));
    }
    out
}
