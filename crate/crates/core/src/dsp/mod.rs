//! The CSI processing pipeline: per-stream smoothing (median, EMA,
//! Butterworth low-pass) and PCA projection down to a few feature
//! dimensions per sample.

mod filters;
mod pca;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::trace::{CsiStream, TraceError};

pub use filters::{butterworth_apply, butterworth_design, ema_filter, median_filter, Biquad, SosFilter};
pub use pca::{pca_fit, pca_project, project_rows, PcaBasis};

#[derive(Debug, Error)]
pub enum DspError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("component index {index} out of range 1..={available}")]
    Index { index: usize, available: usize },
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

/// Whether smoothing runs on raw streams before projection (default) or on
/// the projected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineOrder {
    FilterFirst,
    PcaFirst,
}

impl PipelineOrder {
    #[must_use]
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineOrder::FilterFirst => "filter-first",
            PipelineOrder::PcaFirst => "pca-first",
        }
    }
}

impl fmt::Display for PipelineOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineOrder {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, DspError> {
        match s {
            "filter-first" => Ok(PipelineOrder::FilterFirst),
            "pca-first" => Ok(PipelineOrder::PcaFirst),
            other => Err(DspError::Config(format!(
                "pipeline_order must be filter-first or pca-first, got {other:?}"
            ))),
        }
    }
}

/// Tunables for the processing pipeline.
///
/// `pca_keep` holds 1-indexed component numbers; the default drops the first
/// component, which soaks up broadband noise common to all streams, and
/// keeps the next three.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub median_window: usize,
    pub ema_window: usize,
    pub butterworth_order: usize,
    pub butterworth_cutoff_hz: f64,
    pub sample_rate_hz: f64,
    pub pca_keep: Vec<usize>,
    pub pipeline_order: PipelineOrder,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            median_window: 9,
            ema_window: 15,
            butterworth_order: 4,
            butterworth_cutoff_hz: 10.0,
            sample_rate_hz: 50.0,
            pca_keep: vec![2, 3, 4],
            pipeline_order: PipelineOrder::FilterFirst,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.median_window % 2 == 0 || self.median_window < 3 {
            return Err(DspError::Config(format!(
                "median_window must be odd and >= 3, got {}",
                self.median_window
            )));
        }
        if self.ema_window < 1 {
            return Err(DspError::Config("ema_window must be >= 1".into()));
        }
        if self.butterworth_order < 1 {
            return Err(DspError::Config("butterworth_order must be >= 1".into()));
        }
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(DspError::Config(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if !(self.butterworth_cutoff_hz > 0.0)
            || self.butterworth_cutoff_hz >= self.sample_rate_hz / 2.0
        {
            return Err(DspError::Config(format!(
                "butterworth_cutoff_hz {} must lie in (0, {})",
                self.butterworth_cutoff_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        if self.pca_keep.is_empty() {
            return Err(DspError::Config("pca_keep must not be empty".into()));
        }
        for (i, &k) in self.pca_keep.iter().enumerate() {
            if k < 1 {
                return Err(DspError::Config("pca_keep indices are 1-based".into()));
            }
            if self.pca_keep[..i].contains(&k) {
                return Err(DspError::Config(format!(
                    "pca_keep contains duplicate index {k}"
                )));
            }
        }
        Ok(())
    }

    /// Feature dimensionality produced by this configuration.
    #[must_use]
    pub fn feature_dim(&self) -> usize {
        self.pca_keep.len()
    }
}

/// One denoised, projected sample: a `pca_keep.len()`-dimensional point at a
/// frame timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    pub timestamp_us: u64,
    pub values: Vec<f64>,
}

/// Run median -> EMA -> Butterworth down every column of `matrix`.
///
/// The low-pass is applied relative to each column's first value (the
/// cascade is effectively warm-started at that level), so a constant column
/// passes through unchanged instead of ringing in from zero state.
pub fn filter_columns(matrix: &DMatrix<f64>, config: &PipelineConfig) -> Result<DMatrix<f64>, DspError> {
    config.validate()?;
    let lowpass = butterworth_design(
        config.butterworth_order,
        config.butterworth_cutoff_hz,
        config.sample_rate_hz,
    )?;
    let mut out = DMatrix::zeros(matrix.nrows(), matrix.ncols());
    let mut column = Vec::with_capacity(matrix.nrows());
    for j in 0..matrix.ncols() {
        column.clear();
        column.extend(matrix.column(j).iter());
        let smoothed = median_filter(&column, config.median_window)?;
        let mut smoothed = ema_filter(&smoothed, config.ema_window)?;
        let level = smoothed[0];
        for v in &mut smoothed {
            *v -= level;
        }
        let filtered = butterworth_apply(&lowpass, &smoothed)?;
        for (i, v) in filtered.into_iter().enumerate() {
            out[(i, j)] = v + level;
        }
    }
    Ok(out)
}

/// Full pipeline over a stream: amplitudes, smoothing, and projection onto
/// the configured components, in the configured order. Timestamps are
/// preserved; output length equals input length.
pub fn process_stream(
    stream: &CsiStream,
    config: &PipelineConfig,
    basis: &PcaBasis,
) -> Result<Vec<FeatureSample>, DspError> {
    config.validate()?;
    let amplitudes = csi_amplitudes(stream)?;
    if amplitudes.ncols() != basis.input_dim() {
        return Err(DspError::Geometry(format!(
            "stream has {} CSI streams, basis was fitted on {}",
            amplitudes.ncols(),
            basis.input_dim()
        )));
    }
    let features = match config.pipeline_order {
        PipelineOrder::FilterFirst => {
            let filtered = filter_columns(&amplitudes, config)?;
            project_rows(basis, &filtered, &config.pca_keep)?
        }
        PipelineOrder::PcaFirst => {
            let projected = project_rows(basis, &amplitudes, &config.pca_keep)?;
            filter_columns(&projected, config)?
        }
    };
    Ok(collect_features(stream, &features))
}

/// Pair projected rows with their frame timestamps.
pub(crate) fn collect_features(stream: &CsiStream, rows: &DMatrix<f64>) -> Vec<FeatureSample> {
    stream
        .frames
        .iter()
        .zip(rows.row_iter())
        .map(|(frame, row)| FeatureSample {
            timestamp_us: frame.timestamp_us,
            values: row.iter().cloned().collect(),
        })
        .collect()
}

pub(crate) fn csi_amplitudes(stream: &CsiStream) -> Result<DMatrix<f64>, DspError> {
    crate::trace::csi_amplitude_streams(stream).map_err(|e| match e {
        TraceError::EmptyInput(what) => DspError::EmptyInput(what),
        other => DspError::Geometry(other.to_string()),
    })
}
