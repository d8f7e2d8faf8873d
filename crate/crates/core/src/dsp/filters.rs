//! Scalar smoothing filters: sliding median, exponential moving average, and
//! a Butterworth low-pass realized as cascaded second-order sections.

use num_complex::Complex64;

use super::DspError;

/// Sliding-window median with edge replication.
///
/// The window must be odd; each output is the median of the `window` input
/// values centered on that position, with the first/last value replicated
/// `(window-1)/2` times past the edges.
pub fn median_filter(series: &[f64], window: usize) -> Result<Vec<f64>, DspError> {
    if window == 0 || window % 2 == 0 {
        return Err(DspError::Config(format!(
            "median window must be odd, got {window}"
        )));
    }
    if series.is_empty() || window > 2 * series.len() - 1 {
        return Err(DspError::Config(format!(
            "median window {window} too large for series of length {}",
            series.len()
        )));
    }
    let half = (window / 2) as isize;
    let last = series.len() as isize - 1;
    let mut buf = vec![0.0f64; window];
    let mut out = Vec::with_capacity(series.len());
    for i in 0..series.len() as isize {
        for (slot, j) in (i - half..=i + half).enumerate() {
            buf[slot] = series[j.clamp(0, last) as usize];
        }
        let (_, median, _) = buf.select_nth_unstable_by(half as usize, f64::total_cmp);
        out.push(*median);
    }
    Ok(out)
}

/// Exponential moving average with the window-to-factor convention
/// `beta = 2 / (window + 1)`.
///
/// `y[0] = x[0]`, then `y[n] = beta*x[n] + (1-beta)*y[n-1]`. An empty series
/// maps to an empty output.
pub fn ema_filter(series: &[f64], window: usize) -> Result<Vec<f64>, DspError> {
    if window == 0 {
        return Err(DspError::Config("ema window must be at least 1".into()));
    }
    let beta = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(series.len());
    let mut y = match series.first() {
        Some(&x0) => x0,
        None => return Ok(out),
    };
    out.push(y);
    for &x in &series[1..] {
        y = beta * x + (1.0 - beta) * y;
        out.push(y);
    }
    Ok(out)
}

/// One second-order section, normalized so the leading denominator
/// coefficient is 1. First-order sections set `b2 = a2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

/// A digital low-pass as a cascade of second-order sections, with the design
/// parameters kept for frequency-response evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl SosFilter {
    /// Magnitude of the frequency response at `freq_hz`.
    #[must_use]
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * std::f64::consts::PI * freq_hz / self.sample_rate_hz;
        let z_inv = Complex64::new(0.0, -omega).exp();
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = Complex64::new(s.b0, 0.0) + z_inv * (s.b1 + z_inv * s.b2);
            let den = Complex64::new(1.0, 0.0) + z_inv * (s.a1 + z_inv * s.a2);
            h *= num / den;
        }
        h.norm()
    }
}

/// Design a digital Butterworth low-pass via the bilinear transform of the
/// analog prototype, with frequency pre-warping so the -3 dB point lands
/// exactly on `cutoff_hz`.
pub fn butterworth_design(
    order: usize,
    cutoff_hz: f64,
    sample_rate_hz: f64,
) -> Result<SosFilter, DspError> {
    if order == 0 {
        return Err(DspError::Config("butterworth order must be at least 1".into()));
    }
    if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
        return Err(DspError::Config(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    if !(cutoff_hz > 0.0) || cutoff_hz >= sample_rate_hz / 2.0 {
        return Err(DspError::Config(format!(
            "cutoff {cutoff_hz} Hz must lie in (0, {}) (below Nyquist)",
            sample_rate_hz / 2.0
        )));
    }

    use std::f64::consts::PI;
    // Pre-warped analog cutoff and bilinear constant.
    let wa = 2.0 * sample_rate_hz * (PI * cutoff_hz / sample_rate_hz).tan();
    let k = 2.0 * sample_rate_hz;
    let n = order;

    let mut sections = Vec::with_capacity((n + 1) / 2);
    // Left-half-plane pole pairs of the analog prototype, scaled by wa. The
    // pole at angle theta and its conjugate give the analog section
    // s^2 + (-2 Re p) s + wa^2.
    for pair in 0..n / 2 {
        let theta = PI * (2.0 * pair as f64 + n as f64 + 1.0) / (2.0 * n as f64);
        let re = wa * theta.cos();
        let a1_analog = -2.0 * re;
        let a0_analog = wa * wa;
        let d0 = k * k + a1_analog * k + a0_analog;
        sections.push(Biquad {
            b0: a0_analog / d0,
            b1: 2.0 * a0_analog / d0,
            b2: a0_analog / d0,
            a1: (2.0 * a0_analog - 2.0 * k * k) / d0,
            a2: (k * k - a1_analog * k + a0_analog) / d0,
        });
    }
    if n % 2 == 1 {
        // Real pole at -wa becomes a first-order section.
        let d0 = k + wa;
        sections.push(Biquad {
            b0: wa / d0,
            b1: wa / d0,
            b2: 0.0,
            a1: (wa - k) / d0,
            a2: 0.0,
        });
    }
    Ok(SosFilter {
        sections,
        order,
        cutoff_hz,
        sample_rate_hz,
    })
}

/// Run the cascade over a series (direct form II transposed, zero initial
/// conditions). Causal; output length equals input length.
pub fn butterworth_apply(filter: &SosFilter, series: &[f64]) -> Result<Vec<f64>, DspError> {
    if series.is_empty() {
        return Err(DspError::EmptyInput("cannot filter an empty series"));
    }
    let mut out = series.to_vec();
    for s in &filter.sections {
        let mut z1 = 0.0;
        let mut z2 = 0.0;
        for v in out.iter_mut() {
            let x = *v;
            let y = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * y + z2;
            z2 = s.b2 * x - s.a2 * y;
            *v = y;
        }
    }
    Ok(out)
}
