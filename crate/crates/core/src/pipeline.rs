//! Data processing and mapping: per-channel normalization, simple semantic
//! mapping from capture outcomes, and cross-stream correlation.
//!
//! Digital series use last-value-held interpolation: a sample at `t` holds
//! until the next sample. Before its first sample a series counts as off.

use serde::{Deserialize, Serialize};

use crate::model::{
    Calibration, CalibrationKind, CaptureSource, EntryDetail, OriginSemantic, SensorReading, SuppressionCause,
    TimelineEntry, Timestamp,
};

pub const DEFAULT_CORRELATION_WINDOW_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSample {
    pub channel: String,
    pub ts: Timestamp,
    pub value: f64,
    pub degenerate: bool,
}

/// Maps a raw reading onto [0,1] (analog) or {0,1} (digital). A degenerate
/// analog calibration yields 0.0 with the flag set.
pub fn normalize(reading: &SensorReading, cal: &Calibration) -> NormalizedSample {
    debug_assert_eq!(reading.channel, cal.channel);
    let (value, degenerate) = match cal.kind {
        CalibrationKind::Digital => (if reading.value >= cal.threshold { 1.0 } else { 0.0 }, false),
        CalibrationKind::Analog if cal.degenerate => (0.0, true),
        CalibrationKind::Analog => (scale(reading.value, cal.min, cal.max), false),
    };
    NormalizedSample { channel: reading.channel.clone(), ts: reading.ts, value, degenerate }
}

fn scale(v: f64, min: f64, max: f64) -> f64 {
    if v <= min {
        return 0.0;
    }
    if v >= max {
        return 1.0;
    }
    let span = max - min;
    let ratio = if span.is_finite() { (v - min) / span } else { (v / 2.0 - min / 2.0) / (max / 2.0 - min / 2.0) };
    ratio.clamp(0.0, 1.0)
}

/// What happened at a capture opportunity, as far as semantics go.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CaptureOutcome {
    Stored { source: CaptureSource },
    Suppressed { cause: SuppressionCause },
    UnavailableInterval,
    Redacted,
    PerspectiveRejected,
}

pub fn semantic_of(outcome: CaptureOutcome) -> OriginSemantic {
    match outcome {
        CaptureOutcome::Stored { source: CaptureSource::Reactive | CaptureSource::Cadence } => OriginSemantic::Available,
        CaptureOutcome::Stored { source: CaptureSource::CaptureAfter } => OriginSemantic::Posed,
        CaptureOutcome::Stored { source: CaptureSource::Manual } => OriginSemantic::Manual,
        CaptureOutcome::Suppressed { cause: SuppressionCause::SwitchedOff | SuppressionCause::DisabledWindow } => {
            OriginSemantic::Unavailable
        }
        CaptureOutcome::Suppressed { cause: SuppressionCause::Postponed } => OriginSemantic::Postponed,
        CaptureOutcome::UnavailableInterval => OriginSemantic::Unavailable,
        CaptureOutcome::Redacted => OriginSemantic::DeletedByParticipant,
        CaptureOutcome::PerspectiveRejected => OriginSemantic::RejectedByPerspective,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitalSample {
    pub ts: Timestamp,
    pub on: bool,
}

/// Time-sorted on/off samples of one stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DigitalSeries(Vec<DigitalSample>);

impl DigitalSeries {
    /// Sorts by timestamp; among equal timestamps the later sample wins.
    pub fn new(mut samples: Vec<DigitalSample>) -> Self {
        samples.sort_by_key(|s| s.ts);
        DigitalSeries(samples)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, bool)>) -> Self {
        DigitalSeries::new(pairs.into_iter().map(|(ts, on)| DigitalSample { ts: Timestamp(ts), on }).collect())
    }

    pub fn samples(&self) -> &[DigitalSample] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn first_ts(&self) -> Option<u64> {
        self.0.first().map(|s| s.ts.0)
    }

    fn last_ts(&self) -> Option<u64> {
        self.0.last().map(|s| s.ts.0)
    }

    /// Constant-state segments `[start, end)` clipped to `[lo, hi)`, with
    /// `None` where no sample precedes the segment.
    fn segments(&self, lo: i64, hi: i64) -> Vec<(i64, i64, Option<bool>)> {
        let mut out = Vec::new();
        let mut cursor = lo;
        let mut state: Option<bool> = None;
        for s in &self.0 {
            let t = s.ts.0 as i64;
            if t > cursor {
                let end = t.min(hi);
                if end > cursor {
                    out.push((cursor, end, state));
                }
                cursor = end;
            }
            state = Some(s.on);
            if cursor >= hi {
                return out;
            }
        }
        if hi > cursor {
            out.push((cursor, hi, state));
        }
        out
    }
}

/// Digital series of a channel rebuilt from stored reading entries. Values
/// at or above 0.5 (after normalization, when available) count as on.
pub fn digital_series<'a>(entries: impl IntoIterator<Item = &'a TimelineEntry>, channel: &str) -> DigitalSeries {
    DigitalSeries::new(
        entries
            .into_iter()
            .filter_map(|e| match &e.detail {
                EntryDetail::Reading { channel: c, value, normalized, .. } if c == channel => {
                    Some(DigitalSample { ts: e.ts, on: normalized.unwrap_or(*value) >= 0.5 })
                }
                _ => None,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StreamCorrelation {
    Covered { stream: String, state: u8, coverage: f64 },
    NoData { stream: String, no_data: bool },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineError {
    #[error("window_ms must be positive")]
    ZeroWindow,
}

/// For each stream, the fraction of `[photo_ts - w, photo_ts + w)` spent on.
/// State is 1 when coverage is at least one half. Streams with no sample at
/// or before the window end are reported as no data.
pub fn correlate(
    photo_ts: Timestamp,
    streams: &[(String, DigitalSeries)],
    window_ms: u64,
) -> Result<Vec<StreamCorrelation>, PipelineError> {
    if window_ms == 0 {
        return Err(PipelineError::ZeroWindow);
    }
    let lo = photo_ts.0 as i64 - window_ms as i64;
    let hi = photo_ts.0 as i64 + window_ms as i64;
    Ok(streams
        .iter()
        .map(|(name, series)| {
            if series.first_ts().is_none_or(|t| t as i64 >= hi) {
                return StreamCorrelation::NoData { stream: name.clone(), no_data: true };
            }
            let on: i64 = series
                .segments(lo, hi)
                .into_iter()
                .filter(|(_, _, s)| *s == Some(true))
                .map(|(a, b, _)| b - a)
                .sum();
            let coverage = on as f64 / (hi - lo) as f64;
            StreamCorrelation::Covered { stream: name.clone(), state: u8::from(coverage >= 0.5), coverage }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: Timestamp,
    pub end: Timestamp,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "A_and_not_B")]
    AAndNotB,
}

impl Relation {
    pub fn label(self) -> &'static str {
        match self {
            Relation::AAndNotB => "A_and_not_B",
        }
    }
}

/// Maximal half-open intervals `[start, end)` where the relation holds,
/// observed between the earliest and latest sample of either series.
pub fn find_intervals(a: &DigitalSeries, b: &DigitalSeries, relation: Relation) -> Vec<Interval> {
    let (Some(lo), Some(hi)) = (
        [a.first_ts(), b.first_ts()].into_iter().flatten().min(),
        [a.last_ts(), b.last_ts()].into_iter().flatten().max(),
    ) else {
        return Vec::new();
    };
    let mut bounds: Vec<u64> = a.samples().iter().chain(b.samples()).map(|s| s.ts.0).collect();
    bounds.push(hi);
    bounds.sort_unstable();
    bounds.dedup();

    let mut cur_a = Cursor::new(a);
    let mut cur_b = Cursor::new(b);
    let mut out: Vec<Interval> = Vec::new();
    let mut start = lo;
    for &end in &bounds {
        if end <= start {
            continue;
        }
        let holds = match relation {
            Relation::AAndNotB => cur_a.state_at(start) && !cur_b.state_at(start),
        };
        if holds {
            match out.last_mut() {
                Some(last) if last.end.0 == start => last.end = Timestamp(end),
                _ => out.push(Interval {
                    start: Timestamp(start),
                    end: Timestamp(end),
                    label: relation.label().to_string(),
                }),
            }
        }
        start = end;
    }
    out
}

/// Forward-only last-value-held lookup.
struct Cursor<'a> {
    samples: &'a [DigitalSample],
    next: usize,
    state: bool,
}

impl<'a> Cursor<'a> {
    fn new(series: &'a DigitalSeries) -> Self {
        Cursor { samples: series.samples(), next: 0, state: false }
    }

    /// Queries must be non-decreasing in `t`.
    fn state_at(&mut self, t: u64) -> bool {
        while let Some(s) = self.samples.get(self.next).filter(|s| s.ts.0 <= t) {
            self.state = s.on;
            self.next += 1;
        }
        self.state
    }
}
