//! CSI containers and the CSITrace v1 on-disk format.
//!
//! A CSI sample is the complex channel frequency response measured per OFDM
//! subcarrier and antenna pair. Streams are persisted in a little-endian
//! binary format (20-byte header followed by fixed-size frame records) that
//! round-trips losslessly. Session labels live in a text sidecar mapping
//! half-open time ranges to a (kind, motion, location) triple.

use std::fmt;
use std::io::{self, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex32;
use thiserror::Error;

/// Magic bytes opening every CSITrace v1 file.
pub const TRACE_MAGIC: [u8; 4] = *b"CSIT";
/// Current format version.
pub const TRACE_VERSION: u16 = 1;
/// Fixed header size in bytes.
pub const TRACE_HEADER_LEN: u64 = 20;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("write failed after {bytes_written} bytes: {source}")]
    Write {
        bytes_written: u64,
        #[source]
        source: io::Error,
    },
    #[error("read failed at byte {offset}: {source}")]
    Read {
        offset: u64,
        #[source]
        source: io::Error,
    },
    /// The input ended before a complete header/frame could be read.
    #[error("truncated trace: input ends at byte {offset} while reading {expected}")]
    Truncation { offset: u64, expected: &'static str },
    #[error("malformed trace at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("stream invariant violated: {0}")]
    Invariant(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("label sidecar line {line}: {reason}")]
    Label { line: usize, reason: String },
}

/// One CSI measurement: the complex channel response for every
/// (subcarrier, tx, rx) combination at a single instant.
///
/// `h` is laid out subcarrier-major, then tx, then rx:
/// `h[sub * n_tx * n_rx + tx * n_rx + rx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    pub timestamp_us: u64,
    pub n_tx: u8,
    pub n_rx: u8,
    pub n_sub: u16,
    pub h: Vec<Complex32>,
}

impl CsiFrame {
    /// Number of (subcarrier, tx, rx) entries this frame must carry.
    #[must_use]
    pub fn entry_count(&self) -> usize {
        self.n_sub as usize * self.n_tx as usize * self.n_rx as usize
    }

    /// Channel response for one (subcarrier, tx, rx) triple.
    #[must_use]
    pub fn entry(&self, sub: usize, tx: usize, rx: usize) -> Complex32 {
        self.h[(sub * self.n_tx as usize + tx) * self.n_rx as usize + rx]
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.n_tx == 0 || self.n_rx == 0 || self.n_sub == 0 {
            return Err(TraceError::Invariant(format!(
                "frame geometry must be nonzero, got {}x{}x{}",
                self.n_tx, self.n_rx, self.n_sub
            )));
        }
        if self.h.len() != self.entry_count() {
            return Err(TraceError::Invariant(format!(
                "frame holds {} entries, geometry {}x{}x{} requires {}",
                self.h.len(),
                self.n_tx,
                self.n_rx,
                self.n_sub,
                self.entry_count()
            )));
        }
        if self.h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(TraceError::Invariant(format!(
                "non-finite CSI entry in frame at {} us",
                self.timestamp_us
            )));
        }
        Ok(())
    }
}

/// An ordered sequence of CSI frames sampled at a nominal rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiStream {
    pub sample_rate_hz: f64,
    pub frames: Vec<CsiFrame>,
}

impl CsiStream {
    /// Geometry shared by all frames, or `None` for an empty stream.
    #[must_use]
    pub fn geometry(&self) -> Option<(u8, u8, u16)> {
        self.frames.first().map(|f| (f.n_tx, f.n_rx, f.n_sub))
    }

    /// Number of scalar CSI streams per frame (`n_sub * n_tx * n_rx`).
    #[must_use]
    pub fn stream_count(&self) -> usize {
        self.frames.first().map_or(0, CsiFrame::entry_count)
    }

    #[must_use]
    pub fn duration_s(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => (b.timestamp_us - a.timestamp_us) as f64 / 1e6,
            _ => 0.0,
        }
    }

    /// Hard invariants: positive rate, uniform geometry, valid frames,
    /// strictly increasing timestamps.
    pub fn validate(&self) -> Result<(), TraceError> {
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return Err(TraceError::Invariant(format!(
                "sample rate must be positive and finite, got {}",
                self.sample_rate_hz
            )));
        }
        let mut prev_ts = None;
        let geometry = self.geometry();
        for frame in &self.frames {
            frame.validate()?;
            if Some((frame.n_tx, frame.n_rx, frame.n_sub)) != geometry {
                return Err(TraceError::Invariant(
                    "all frames in a stream must share one geometry".into(),
                ));
            }
            if let Some(prev) = prev_ts {
                if frame.timestamp_us <= prev {
                    return Err(TraceError::Invariant(format!(
                        "non-monotone timestamps: {} us follows {} us",
                        frame.timestamp_us, prev
                    )));
                }
            }
            prev_ts = Some(frame.timestamp_us);
        }
        Ok(())
    }

    /// Median interval between consecutive frames, in microseconds.
    #[must_use]
    pub fn median_interval_us(&self) -> Option<u64> {
        if self.frames.len() < 2 {
            return None;
        }
        let mut gaps: Vec<u64> = self
            .frames
            .windows(2)
            .map(|w| w[1].timestamp_us - w[0].timestamp_us)
            .collect();
        gaps.sort_unstable();
        Some(gaps[gaps.len() / 2])
    }

    /// Soft pacing check: warns when the median inter-frame interval strays
    /// more than 10% from the nominal `1/sample_rate_hz`. Violations are
    /// reported, not fatal — real captures jitter.
    #[must_use]
    pub fn interval_warning(&self) -> Option<String> {
        let median = self.median_interval_us()? as f64;
        let nominal = 1e6 / self.sample_rate_hz;
        if (median - nominal).abs() > 0.1 * nominal {
            Some(format!(
                "median inter-frame interval {median:.0} us deviates more than 10% \
                 from nominal {nominal:.0} us"
            ))
        } else {
            None
        }
    }
}

/// Session kind: where (if anywhere) the labeled motion happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelKind {
    NoMotion,
    IndoorMotion,
    OutdoorMotion,
}

impl LabelKind {
    #[must_use]
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::NoMotion => "NO_MOTION",
            LabelKind::IndoorMotion => "INDOOR_MOTION",
            LabelKind::OutdoorMotion => "OUTDOOR_MOTION",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "NO_MOTION" => Some(LabelKind::NoMotion),
            "INDOOR_MOTION" => Some(LabelKind::IndoorMotion),
            "OUTDOOR_MOTION" => Some(LabelKind::OutdoorMotion),
            _ => None,
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The motion performed during a session, `None` for quiet sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionKind {
    None,
    WaveHand,
    SitDownStandUp,
    Jump,
}

impl MotionKind {
    #[must_use]
    pub fn as_str(self) -> &'static str {
        match self {
            MotionKind::None => "NONE",
            MotionKind::WaveHand => "WAVE_HAND",
            MotionKind::SitDownStandUp => "SIT_DOWN_STAND_UP",
            MotionKind::Jump => "JUMP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "NONE" => Some(MotionKind::None),
            "WAVE_HAND" => Some(MotionKind::WaveHand),
            "SIT_DOWN_STAND_UP" => Some(MotionKind::SitDownStandUp),
            "JUMP" => Some(MotionKind::Jump),
            _ => None,
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a stretch of a trace contains: kind, motion, and a free-text
/// location tag such as "A" or "M'".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionLabel {
    pub kind: LabelKind,
    pub motion: MotionKind,
    pub location_tag: String,
}

impl SessionLabel {
    pub fn new(kind: LabelKind, motion: MotionKind, location_tag: impl Into<String>) -> Self {
        SessionLabel {
            kind,
            motion,
            location_tag: location_tag.into(),
        }
    }

    /// `NO_MOTION` and `NONE` imply each other.
    pub fn validate(&self) -> Result<(), TraceError> {
        let quiet_kind = self.kind == LabelKind::NoMotion;
        let quiet_motion = self.motion == MotionKind::None;
        if quiet_kind != quiet_motion {
            return Err(TraceError::Invariant(format!(
                "label {}/{} breaks the NO_MOTION <=> NONE coupling",
                self.kind, self.motion
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SessionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.kind, self.motion, self.location_tag)
    }
}

/// One sidecar record: `label` applies to the half-open range
/// `[start_us, end_us)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub start_us: u64,
    pub end_us: u64,
    pub label: SessionLabel,
}

impl LabelRecord {
    #[must_use]
    pub fn contains(&self, timestamp_us: u64) -> bool {
        self.start_us <= timestamp_us && timestamp_us < self.end_us
    }
}

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn write_all_counted(&mut self, mut buf: &[u8]) -> Result<(), TraceError> {
        while !buf.is_empty() {
            match self.inner.write(buf) {
                Ok(0) => {
                    return Err(TraceError::Write {
                        bytes_written: self.written,
                        source: io::ErrorKind::WriteZero.into(),
                    })
                }
                Ok(n) => {
                    self.written += n as u64;
                    buf = &buf[n..];
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    return Err(TraceError::Write {
                        bytes_written: self.written,
                        source: e,
                    })
                }
            }
        }
        Ok(())
    }
}

/// Serialize a stream as CSITrace v1. Returns the number of bytes written.
///
/// The stream is validated first so an invalid stream never produces a file.
/// An empty stream writes a header with the degenerate 1×1×1 geometry.
pub fn write_trace<W: Write>(stream: &CsiStream, sink: W) -> Result<u64, TraceError> {
    stream.validate()?;
    let (n_tx, n_rx, n_sub) = stream.geometry().unwrap_or((1, 1, 1));
    let frame_count = u32::try_from(stream.frames.len())
        .map_err(|_| TraceError::Invariant("more than u32::MAX frames".into()))?;
    let rate_mhz = (stream.sample_rate_hz * 1000.0).round();
    if !(rate_mhz >= 1.0 && rate_mhz <= u32::MAX as f64) {
        return Err(TraceError::Invariant(format!(
            "sample rate {} Hz does not fit the millihertz header field",
            stream.sample_rate_hz
        )));
    }

    let mut w = CountingWriter {
        inner: sink,
        written: 0,
    };
    let mut header = [0u8; TRACE_HEADER_LEN as usize];
    header[0..4].copy_from_slice(&TRACE_MAGIC);
    header[4..6].copy_from_slice(&TRACE_VERSION.to_le_bytes());
    header[6] = n_tx;
    header[7] = n_rx;
    header[8..10].copy_from_slice(&n_sub.to_le_bytes());
    header[10..14].copy_from_slice(&(rate_mhz as u32).to_le_bytes());
    header[14..18].copy_from_slice(&frame_count.to_le_bytes());
    // bytes 18..20 stay zero (reserved)
    w.write_all_counted(&header)?;

    let entries = stream.stream_count();
    let mut record = Vec::with_capacity(8 + entries * 8);
    for frame in &stream.frames {
        record.clear();
        record.extend_from_slice(&frame.timestamp_us.to_le_bytes());
        for z in &frame.h {
            record.extend_from_slice(&z.re.to_le_bytes());
            record.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all_counted(&record)?;
    }
    Ok(w.written)
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    /// Fill `buf` completely or report truncation at the exact byte offset
    /// where the input ended.
    fn read_exact_or(&mut self, buf: &mut [u8], expected: &'static str) -> Result<(), TraceError> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(TraceError::Truncation {
                        offset: self.offset,
                        expected,
                    })
                }
                Ok(n) => {
                    filled += n;
                    self.offset += n as u64;
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    return Err(TraceError::Read {
                        offset: self.offset,
                        source: e,
                    })
                }
            }
        }
        Ok(())
    }

    /// True if at least one more byte is available (consuming it).
    fn has_more(&mut self) -> Result<bool, TraceError> {
        let mut byte = [0u8; 1];
        loop {
            match self.inner.read(&mut byte) {
                Ok(0) => return Ok(false),
                Ok(_) => {
                    self.offset += 1;
                    return Ok(true);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    return Err(TraceError::Read {
                        offset: self.offset,
                        source: e,
                    })
                }
            }
        }
    }
}

/// Parse a CSITrace v1 byte stream, validating all stream invariants.
///
/// Truncation at any byte offset is reported as [`TraceError::Truncation`]
/// with the offset where input ended; trailing bytes after the declared
/// frame count are rejected.
pub fn read_trace<R: Read>(source: R) -> Result<CsiStream, TraceError> {
    let mut r = CountingReader {
        inner: source,
        offset: 0,
    };
    let mut header = [0u8; TRACE_HEADER_LEN as usize];
    r.read_exact_or(&mut header, "20-byte header")?;

    if header[0..4] != TRACE_MAGIC {
        return Err(TraceError::Format {
            offset: 0,
            reason: format!("bad magic {:02x?}, expected \"CSIT\"", &header[0..4]),
        });
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != TRACE_VERSION {
        return Err(TraceError::Format {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let n_tx = header[6];
    let n_rx = header[7];
    let n_sub = u16::from_le_bytes([header[8], header[9]]);
    if n_tx == 0 || n_rx == 0 || n_sub == 0 {
        return Err(TraceError::Format {
            offset: 6,
            reason: format!("zero geometry field: {n_tx}x{n_rx}x{n_sub}"),
        });
    }
    let rate_mhz = u32::from_le_bytes(header[10..14].try_into().unwrap());
    if rate_mhz == 0 {
        return Err(TraceError::Format {
            offset: 10,
            reason: "sample rate is zero".into(),
        });
    }
    let frame_count = u32::from_le_bytes(header[14..18].try_into().unwrap());
    let reserved = u16::from_le_bytes([header[18], header[19]]);
    if reserved != 0 {
        return Err(TraceError::Format {
            offset: 18,
            reason: format!("reserved field must be zero, got {reserved}"),
        });
    }

    let entries = n_sub as usize * n_tx as usize * n_rx as usize;
    let record_len = 8 + entries * 8;
    let mut record = vec![0u8; record_len];
    let mut frames = Vec::with_capacity(frame_count as usize);
    let mut prev_ts: Option<u64> = None;
    for _ in 0..frame_count {
        r.read_exact_or(&mut record, "frame record")?;
        let timestamp_us = u64::from_le_bytes(record[0..8].try_into().unwrap());
        if let Some(prev) = prev_ts {
            if timestamp_us <= prev {
                return Err(TraceError::Invariant(format!(
                    "non-monotone timestamps: {timestamp_us} us follows {prev} us"
                )));
            }
        }
        prev_ts = Some(timestamp_us);
        let mut h = Vec::with_capacity(entries);
        for pair in record[8..].chunks_exact(8) {
            let re = f32::from_le_bytes(pair[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(pair[4..8].try_into().unwrap());
            if !re.is_finite() || !im.is_finite() {
                return Err(TraceError::Invariant(format!(
                    "non-finite CSI entry in frame at {timestamp_us} us"
                )));
            }
            h.push(Complex32::new(re, im));
        }
        frames.push(CsiFrame {
            timestamp_us,
            n_tx,
            n_rx,
            n_sub,
            h,
        });
    }
    if r.has_more()? {
        return Err(TraceError::Format {
            offset: r.offset - 1,
            reason: "trailing data after declared frame count".into(),
        });
    }
    Ok(CsiStream {
        sample_rate_hz: rate_mhz as f64 / 1000.0,
        frames,
    })
}

/// Flatten a stream into an `n_frames x n_streams` amplitude matrix.
///
/// Row `r`, column `j` is `|h[j]|` of frame `r`; column order matches the
/// frame layout (subcarrier-major, then tx, then rx).
pub fn csi_amplitude_streams(stream: &CsiStream) -> Result<DMatrix<f64>, TraceError> {
    if stream.frames.is_empty() {
        return Err(TraceError::EmptyInput("stream has no frames"));
    }
    stream.validate()?;
    let rows = stream.frames.len();
    let cols = stream.stream_count();
    Ok(DMatrix::from_fn(rows, cols, |r, j| {
        let z = stream.frames[r].h[j];
        let re = z.re as f64;
        let im = z.im as f64;
        (re * re + im * im).sqrt()
    }))
}

/// Parse a label sidecar. Blank lines and `#` comments are skipped; records
/// must be sorted by start time and non-overlapping.
pub fn parse_labels(text: &str) -> Result<Vec<LabelRecord>, TraceError> {
    let mut records: Vec<LabelRecord> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.splitn(5, ',');
        let mut next = |what: &str| {
            fields.next().map(str::trim).ok_or_else(|| TraceError::Label {
                line: line_no,
                reason: format!("missing {what} field"),
            })
        };
        let start_us: u64 = next("start_us")?.parse().map_err(|e| TraceError::Label {
            line: line_no,
            reason: format!("bad start_us: {e}"),
        })?;
        let end_us: u64 = next("end_us")?.parse().map_err(|e| TraceError::Label {
            line: line_no,
            reason: format!("bad end_us: {e}"),
        })?;
        let kind_field = next("kind")?;
        let kind = LabelKind::parse(kind_field).ok_or_else(|| TraceError::Label {
            line: line_no,
            reason: format!("unknown kind {kind_field:?}"),
        })?;
        let motion_field = next("motion")?;
        let motion = MotionKind::parse(motion_field).ok_or_else(|| TraceError::Label {
            line: line_no,
            reason: format!("unknown motion {motion_field:?}"),
        })?;
        let location_tag = next("location_tag")?.to_string();

        if start_us >= end_us {
            return Err(TraceError::Label {
                line: line_no,
                reason: format!("empty range [{start_us}, {end_us})"),
            });
        }
        let label = SessionLabel::new(kind, motion, location_tag);
        label.validate().map_err(|e| TraceError::Label {
            line: line_no,
            reason: e.to_string(),
        })?;
        if let Some(prev) = records.last() {
            if start_us < prev.end_us {
                return Err(TraceError::Label {
                    line: line_no,
                    reason: format!(
                        "range starting at {} us overlaps or precedes previous end {} us",
                        start_us, prev.end_us
                    ),
                });
            }
        }
        records.push(LabelRecord {
            start_us,
            end_us,
            label,
        });
    }
    Ok(records)
}

/// Read a label sidecar from a byte source.
pub fn read_labels<R: Read>(mut source: R) -> Result<Vec<LabelRecord>, TraceError> {
    let mut text = String::new();
    source
        .read_to_string(&mut text)
        .map_err(|e| TraceError::Read {
            offset: 0,
            source: e,
        })?;
    parse_labels(&text)
}

/// Write label records in sidecar format (one `start,end,kind,motion,tag`
/// line per record).
pub fn write_labels<W: Write>(records: &[LabelRecord], mut sink: W) -> Result<(), TraceError> {
    let mut text = String::new();
    for rec in records {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.start_us, rec.end_us, rec.label.kind, rec.label.motion, rec.label.location_tag
        ));
    }
    sink.write_all(text.as_bytes())
        .map_err(|e| TraceError::Write {
            bytes_written: 0,
            source: e,
        })
}
