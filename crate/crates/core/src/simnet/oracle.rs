//! Reference interpretation of the capture rules.
//!
//! Walks the scenario one millisecond at a time and answers every capture
//! opportunity by reading the precedence table top to bottom. It shares no
//! code with the policy engine; only the vocabulary types are common.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    ActionKind, BaseMode, Calibrations, CalibrationKind, Control, Direction, EntryDetail, EntryKind,
    IntervalCause, IntervalEdge, LatestTarget, OriginSemantic, Perspective, PolicyConfig, Target, TimelineEntry,
};
use crate::simnet::scenario::{EventKind, Scenario};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub ts: u64,
    pub node: String,
    pub semantic: OriginSemantic,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnavailableInterval {
    pub cause: IntervalCause,
    pub start: u64,
    pub end: Option<u64>,
}

/// What a run is judged on.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    /// Photos that were stored (including ones redacted later), sorted.
    pub photos: Vec<PhotoRecord>,
    /// Semantics over photo and interval entries.
    pub semantics: BTreeMap<OriginSemantic, usize>,
    pub intervals: Vec<UnavailableInterval>,
}

impl Outcome {
    /// Extracts the judged facts from a finished timeline.
    pub fn from_entries(entries: &[TimelineEntry]) -> Outcome {
        let mut out = Outcome::default();
        let mut open: BTreeMap<IntervalCause, usize> = BTreeMap::new();
        for e in entries {
            if !matches!(e.kind, EntryKind::Photo | EntryKind::Interval) {
                continue;
            }
            if let Some(s) = e.semantic {
                *out.semantics.entry(s).or_default() += 1;
            }
            match e.detail {
                EntryDetail::Photo { .. } if e.semantic != Some(OriginSemantic::RejectedByPerspective) => {
                    out.photos.push(PhotoRecord {
                        ts: e.ts.0,
                        node: e.node.clone(),
                        semantic: e.semantic.expect("photos carry a semantic"),
                    });
                }
                EntryDetail::Interval { cause, edge: IntervalEdge::Open } => {
                    open.insert(cause, out.intervals.len());
                    out.intervals.push(UnavailableInterval { cause, start: e.ts.0, end: None });
                }
                EntryDetail::Interval { cause, edge: IntervalEdge::Close } => {
                    if let Some(i) = open.remove(&cause) {
                        out.intervals[i].end = Some(e.ts.0);
                    }
                }
                _ => {}
            }
        }
        out.photos.sort();
        out.intervals.sort();
        out
    }

    /// Human-readable list of differences, empty when equal.
    pub fn diff(&self, other: &Outcome) -> Vec<String> {
        let mut d = Vec::new();
        if self.photos != other.photos {
            let a: Vec<_> = self.photos.iter().filter(|p| !other.photos.contains(p)).collect();
            let b: Vec<_> = other.photos.iter().filter(|p| !self.photos.contains(p)).collect();
            d.push(format!("photos differ: only left {a:?}, only right {b:?}"));
        }
        if self.semantics != other.semantics {
            d.push(format!("semantics differ: {:?} vs {:?}", self.semantics, other.semantics));
        }
        if self.intervals != other.intervals {
            d.push(format!("intervals differ: {:?} vs {:?}", self.intervals, other.intervals));
        }
        d
    }
}

pub fn oracle(scenario: &Scenario, cfg: &PolicyConfig) -> Outcome {
    oracle_calibrated(scenario, cfg, &Calibrations::new())
}

#[derive(Clone, Copy, PartialEq)]
enum Source {
    Reactive,
    Cadence,
    Posed,
    Manual,
}

enum Row {
    Unavailable,
    Postponed,
    Capture,
    Nothing,
}

struct Photo {
    ts: u64,
    node: String,
    semantic: OriginSemantic,
    kept: bool,
}

struct World<'a> {
    cfg: &'a PolicyConfig,
    switch_on: bool,
    disabled_until: Option<u64>,
    postponed_until: Option<u64>,
    extended_until: Option<u64>,
    next_cadence: Option<u64>,
    queue: Vec<(u64, Source)>,
    present: bool,
    cameras: BTreeMap<String, (bool, bool, bool)>,
    photos: Vec<Photo>,
    rejected: usize,
    unavailable_marks: usize,
    postponed_marks: usize,
    intervals: Vec<UnavailableInterval>,
}

impl World<'_> {
    fn open(&mut self, cause: IntervalCause, at: u64) {
        self.intervals.push(UnavailableInterval { cause, start: at, end: None });
        self.unavailable_marks += 1;
    }

    fn close(&mut self, cause: IntervalCause, at: u64) {
        for iv in self.intervals.iter_mut().rev() {
            if iv.cause == cause && iv.end.is_none() {
                iv.end = Some(at);
                self.unavailable_marks += 1;
                return;
            }
        }
    }

    fn row(&self, m: u64, source: Source) -> Row {
        let before = |deadline: Option<u64>| deadline.is_some_and(|d| m < d);
        let explicit = source == Source::Posed || source == Source::Manual;
        if !self.switch_on {
            return Row::Unavailable;
        }
        if before(self.disabled_until) {
            return Row::Unavailable;
        }
        if !explicit && before(self.postponed_until) {
            return Row::Postponed;
        }
        if explicit {
            return Row::Capture;
        }
        if source == Source::Reactive && self.cfg.base_mode == BaseMode::Reactive {
            return Row::Capture;
        }
        if source == Source::Cadence && (self.cfg.base_mode == BaseMode::Timelapse || before(self.extended_until)) {
            return Row::Capture;
        }
        Row::Nothing
    }

    fn opportunity(&mut self, m: u64, source: Source) {
        match self.row(m, source) {
            Row::Unavailable => self.unavailable_marks += 1,
            Row::Postponed => self.postponed_marks += 1,
            Row::Nothing => {}
            Row::Capture => {
                let semantic = match source {
                    Source::Reactive | Source::Cadence => OriginSemantic::Available,
                    Source::Posed => OriginSemantic::Posed,
                    Source::Manual => OriginSemantic::Manual,
                };
                let perspective = self.cfg.perspective;
                for (node, &(_object, body, face)) in &self.cameras {
                    let keep = match perspective {
                        Perspective::ObjectOnly => !body && !face,
                        Perspective::InteractionDriven => !face,
                        Perspective::ActivityDriven => true,
                    };
                    if keep {
                        self.photos.push(Photo { ts: m, node: node.clone(), semantic, kept: true });
                    } else {
                        self.rejected += 1;
                    }
                }
            }
        }
    }

    fn due_explicit(&mut self, m: u64) {
        while let Some(i) = self.queue.iter().position(|(at, _)| *at == m) {
            let (_, source) = self.queue.remove(i);
            self.opportunity(m, source);
        }
    }
}

/// Brute-force expected outcome of running `scenario` under `cfg`.
pub fn oracle_calibrated(scenario: &Scenario, cfg: &PolicyConfig, calibrations: &Calibrations) -> Outcome {
    let armed = |c: Control| cfg.enabled_controls.contains(&c);
    let mut w = World {
        cfg,
        switch_on: true,
        disabled_until: None,
        postponed_until: None,
        extended_until: None,
        next_cadence: if cfg.base_mode == BaseMode::Timelapse { Some(cfg.cadence_ms) } else { None },
        queue: Vec::new(),
        present: false,
        cameras: BTreeMap::new(),
        photos: Vec::new(),
        rejected: 0,
        unavailable_marks: 0,
        postponed_marks: 0,
        intervals: Vec::new(),
    };
    let events = scenario.ordered();
    let mut cursor = 0;
    let end = scenario.end_time().0;

    for m in 0..=end {
        // 1. windows ending now
        if w.disabled_until == Some(m) {
            w.disabled_until = None;
            w.close(IntervalCause::Disable, m);
        }
        if w.postponed_until == Some(m) {
            w.postponed_until = None;
        }
        if w.extended_until == Some(m) {
            w.extended_until = None;
            if cfg.base_mode != BaseMode::Timelapse {
                w.next_cadence = None;
            }
        }
        // 2. explicit captures that were scheduled for now
        w.due_explicit(m);
        // 3. cadence
        if w.next_cadence == Some(m) {
            w.opportunity(m, Source::Cadence);
            w.next_cadence = Some(m + cfg.cadence_ms);
        }
        // 4. this millisecond's events
        while cursor < events.len() && events[cursor].t.0 == m {
            let ev = events[cursor];
            cursor += 1;
            match &ev.kind {
                EventKind::FrameOffer { tags } => {
                    w.cameras.insert(ev.node.clone(), (tags.object, tags.body, tags.face));
                }
                EventKind::Reading { channel, value, .. } => {
                    let Some(pred) = &cfg.reactive_predicate else { continue };
                    if *channel != pred.channel {
                        continue;
                    }
                    let v = match calibrations.get(channel) {
                        None => *value,
                        Some(cal) => match cal.kind {
                            CalibrationKind::Digital => f64::from(u8::from(*value >= cal.threshold)),
                            CalibrationKind::Analog if cal.min == cal.max => 0.0,
                            CalibrationKind::Analog => ((value - cal.min) / (cal.max - cal.min)).clamp(0.0, 1.0),
                        },
                    };
                    let active = match pred.direction {
                        Direction::Rising => v >= pred.threshold,
                        Direction::Falling => v <= pred.threshold,
                    };
                    if active && !w.present && cfg.base_mode == BaseMode::Reactive {
                        w.opportunity(m, Source::Reactive);
                    }
                    w.present = active;
                }
                EventKind::Action { action, target, .. } => match action {
                    ActionKind::Disable if armed(Control::Disable) => {
                        if w.disabled_until.is_none() {
                            w.open(IntervalCause::Disable, m);
                        }
                        w.disabled_until = Some(m + cfg.disable_window_ms);
                    }
                    ActionKind::Postpone if armed(Control::Postpone) => {
                        w.postponed_until = Some(m + cfg.postpone_delay_ms);
                    }
                    ActionKind::ToggleSwitch if armed(Control::Switch) => {
                        w.switch_on = !w.switch_on;
                        if w.switch_on {
                            w.close(IntervalCause::Switch, m);
                        } else {
                            w.open(IntervalCause::Switch, m);
                        }
                    }
                    ActionKind::Extend if armed(Control::Extend) => {
                        w.extended_until = Some(m + cfg.extend_window_ms);
                        if cfg.base_mode != BaseMode::Timelapse && w.next_cadence.is_none() {
                            w.next_cadence = Some(m + cfg.cadence_ms);
                        }
                    }
                    ActionKind::CaptureAfter if armed(Control::CaptureAfter) => {
                        w.queue.push((m + cfg.capture_after_delay_ms, Source::Posed));
                    }
                    ActionKind::ManualCapture => w.queue.push((m, Source::Manual)),
                    ActionKind::Redact if armed(Control::DeleteAfter) => {
                        if *target == Some(Target::Latest(LatestTarget::LastPhoto)) {
                            if let Some(p) = w.photos.iter_mut().rev().find(|p| p.kept) {
                                p.kept = false;
                                p.semantic = OriginSemantic::DeletedByParticipant;
                            }
                        }
                    }
                    _ => {}
                },
            }
            w.due_explicit(m);
        }
    }

    let mut out = Outcome::default();
    for p in &w.photos {
        *out.semantics.entry(p.semantic).or_default() += 1;
        out.photos.push(PhotoRecord { ts: p.ts, node: p.node.clone(), semantic: p.semantic });
    }
    for (semantic, n) in [
        (OriginSemantic::RejectedByPerspective, w.rejected),
        (OriginSemantic::Unavailable, w.unavailable_marks),
        (OriginSemantic::Postponed, w.postponed_marks),
    ] {
        if n > 0 {
            *out.semantics.entry(semantic).or_default() += n;
        }
    }
    out.photos.sort();
    out.intervals = w.intervals;
    out.intervals.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(lines: &[&str]) -> Scenario {
        Scenario::parse(&lines.join("\n")).unwrap()
    }

    #[test]
    fn manual_mode_without_actions_takes_nothing() {
        let cfg = PolicyConfig { base_mode: BaseMode::Manual, ..Default::default() };
        let s = scenario(&[
            r#"# {"end":600000}"#,
            r#"{"t":0,"node":"cam","kind":"frame_offer","tags":["object"]}"#,
        ]);
        assert!(oracle(&s, &cfg).photos.is_empty());
    }

    #[test]
    fn disabled_capture_after_leaves_one_suppression() {
        let mut cfg = PolicyConfig {
            base_mode: BaseMode::Manual,
            capture_after_delay_ms: 1_000,
            disable_window_ms: 1_001,
            ..Default::default()
        };
        cfg.enabled_controls.extend([Control::CaptureAfter, Control::Disable]);
        let s = scenario(&[
            r#"{"t":0,"node":"cam","kind":"frame_offer","tags":["object"]}"#,
            r#"{"t":10,"node":"p","kind":"action","action":"capture_after","actor":"a"}"#,
            r#"{"t":10,"node":"p","kind":"action","action":"disable","actor":"a"}"#,
            r#"{"t":5000,"node":"cam","kind":"frame_offer","tags":["object"]}"#,
        ]);
        let out = oracle(&s, &cfg);
        assert!(out.photos.is_empty());
        // open + close markers plus the suppressed posed capture
        assert_eq!(out.semantics.get(&OriginSemantic::Unavailable), Some(&3));
        assert_eq!(out.intervals, vec![UnavailableInterval { cause: IntervalCause::Disable, start: 10, end: Some(1011) }]);
    }

    #[test]
    fn disable_window_drops_the_middle_cadence_photo() {
        let mut cfg = PolicyConfig { cadence_ms: 60_000, disable_window_ms: 30_000, ..Default::default() };
        cfg.enabled_controls.insert(Control::Disable);
        let s = scenario(&[
            r#"# {"end":180000}"#,
            r#"{"t":59000,"node":"cam","kind":"frame_offer","tags":["object"]}"#,
            r#"{"t":100000,"node":"p","kind":"action","action":"disable","actor":"a"}"#,
            r#"{"t":119000,"node":"cam","kind":"frame_offer","tags":["object"]}"#,
            r#"{"t":179000,"node":"cam","kind":"frame_offer","tags":["object"]}"#,
        ]);
        let ts: Vec<u64> = oracle(&s, &cfg).photos.iter().map(|p| p.ts).collect();
        assert_eq!(ts, [60_000, 180_000]);
    }
}
