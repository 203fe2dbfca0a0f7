//! The hub engine: wires policy, notices, normalization and the store into
//! one serialized event sequence.
//!
//! Every input is stamped by the hub clock (the later of the current clock
//! and the input's own timestamp), due timers are matured, and the resulting
//! policy actions are materialized as timeline entries. Notices are appended
//! immediately before the effect that owes them, so every photo is preceded
//! by its own capture notice.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HubError, StoreError};
use crate::model::{
    validate_config, Action, Annotation, BaseMode, Calibrations, CaptureSource, EntryDetail, EntryKind, Frame,
    IntervalEdge, LatestTarget, OriginSemantic, ParticipantAction, PolicyConfig, PolicyState, SensorReading, TagSet,
    Target, TimelineEntry, Timestamp,
};
use crate::notify;
use crate::pipeline::{self, semantic_of, CaptureOutcome, DigitalSeries, StreamCorrelation};
use crate::policy::{self, Admission, PolicyAction, PolicyError, PolicyInput};
use crate::store::{NewEntry, Store, Tombstone};

/// Node name used for entries the hub itself produces.
pub const HUB_NODE: &str = "hub";

/// Something observers (live stream, broker) should hear about.
#[derive(Debug, Clone, PartialEq)]
pub enum HubEvent {
    Appended(TimelineEntry),
    Redacted(Tombstone),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Scene {
    tags: TagSet,
}

/// Counters reported after a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HubStats {
    pub entries: u64,
    pub semantics: BTreeMap<OriginSemantic, u64>,
    pub notices: u64,
    pub photos_stored: u64,
    pub readings: u64,
    pub actions_applied: u64,
    /// Actions refused because their control was not armed or had no target.
    pub rejections: u64,
}

pub struct Hub {
    cfg: PolicyConfig,
    calibrations: Calibrations,
    state: PolicyState,
    clock: Timestamp,
    store: Store,
    scenes: BTreeMap<String, Scene>,
    payload_seed: u64,
    actions_applied: u64,
    rejections: u64,
    events: Vec<HubEvent>,
}

impl std::fmt::Debug for Hub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hub").field("clock", &self.clock).field("state", &self.state).finish_non_exhaustive()
    }
}

impl Hub {
    /// Starts a hub at logical time zero. Fails if the config is invalid.
    pub fn new(cfg: PolicyConfig, calibrations: Calibrations, store: Store, payload_seed: u64) -> Result<Self, HubError> {
        validate_config(&cfg, &calibrations).map_err(HubError::InvalidConfig)?;
        let start = store.entries().iter().map(|e| e.ts).max().unwrap_or(Timestamp::ZERO);
        Ok(Hub {
            state: PolicyState::initial(&cfg, start),
            cfg,
            calibrations,
            clock: start,
            store,
            scenes: BTreeMap::new(),
            payload_seed,
            actions_applied: 0,
            rejections: 0,
            events: Vec::new(),
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn calibrations(&self) -> &Calibrations {
        &self.calibrations
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn clock(&self) -> Timestamp {
        self.clock
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn into_store(self) -> Store {
        self.store
    }

    pub fn next_deadline(&self) -> Option<Timestamp> {
        policy::next_deadline(&self.state)
    }

    /// Takes the events produced since the last call.
    pub fn drain_events(&mut self) -> Vec<HubEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn stats(&self) -> HubStats {
        let mut stats = HubStats {
            entries: self.store.len() as u64,
            actions_applied: self.actions_applied,
            rejections: self.rejections,
            ..Default::default()
        };
        for e in self.store.entries() {
            if let Some(s) = e.semantic {
                *stats.semantics.entry(s).or_default() += 1;
            }
            match e.kind {
                EntryKind::Notice => stats.notices += 1,
                EntryKind::Reading => stats.readings += 1,
                EntryKind::Photo if e.semantic != Some(OriginSemantic::RejectedByPerspective) => {
                    stats.photos_stored += 1
                }
                _ => {}
            }
        }
        stats
    }

    fn stamp(&mut self, ts: Timestamp) -> Timestamp {
        self.clock = self.clock.max(ts);
        self.clock
    }

    /// Moves the clock to `now` and matures every timer due by then.
    pub fn advance(&mut self, now: Timestamp) -> Result<(), HubError> {
        let now = self.stamp(now);
        let (state, actions) = policy::tick(&self.state, &self.cfg, now);
        self.state = state;
        self.apply(&actions)
    }

    pub fn ingest_reading(&mut self, reading: &SensorReading) -> Result<u64, HubError> {
        self.advance(reading.ts)?;
        let now = self.clock;
        let normalized = self.calibrations.get(&reading.channel).map(|cal| pipeline::normalize(reading, cal).value);
        let disabled = self.state.disable_until.is_some_and(|d| now < d);
        let mut seq = 0;
        if !(self.cfg.disable_suppresses_readings && disabled) {
            let detail = EntryDetail::Reading {
                channel: reading.channel.clone(),
                value: reading.value,
                normalized,
                unit: reading.unit.clone(),
            };
            seq = self.append(NewEntry::new(now, reading.node.clone(), detail))?;
        }
        let seen = SensorReading { ts: now, value: normalized.unwrap_or(reading.value), ..reading.clone() };
        let (state, actions) = policy::ingest(&self.state, &self.cfg, PolicyInput::Reading(&seen), now)
            .expect("readings are never refused");
        self.state = state;
        self.apply(&actions)?;
        Ok(seq)
    }

    /// Records what a camera currently sees; later captures use it.
    pub fn offer_frame(&mut self, frame: &Frame) -> Result<(), HubError> {
        self.advance(frame.ts)?;
        self.scenes.insert(frame.node.clone(), Scene { tags: frame.tags });
        Ok(())
    }

    /// Applies a participant action. Returns the sequence number of the
    /// entry that records it (the annotation entry for annotations, the
    /// redacted entry for redactions).
    pub fn apply_action(&mut self, node: &str, action: &ParticipantAction) -> Result<u64, HubError> {
        self.advance(action.ts)?;
        let now = self.clock;
        let stamped = ParticipantAction { ts: now, ..action.clone() };
        let (state, actions) = match policy::ingest(&self.state, &self.cfg, PolicyInput::Action(&stamped), now) {
            Ok(t) => t,
            Err(PolicyError::NotArmed) => {
                self.rejections += 1;
                return Err(HubError::NotArmed);
            }
        };
        let seq = match &action.action {
            Action::Redact { target } => {
                let seq = self.resolve(*target).inspect_err(|_| self.rejections += 1)?;
                self.redact(seq, &action.actor)?;
                seq
            }
            Action::Annotate { target, text } => {
                let seq = self.resolve(*target).inspect_err(|_| self.rejections += 1)?;
                self.annotate(seq, &action.actor, text)?.id
            }
            other => {
                let detail = EntryDetail::Action { action: other.kind(), actor: action.actor.clone() };
                self.append(NewEntry::new(now, node, detail))?
            }
        };
        self.state = state;
        self.apply(&actions)?;
        self.actions_applied += 1;
        // manual captures mature at `now`
        self.advance(now)?;
        Ok(seq)
    }

    fn resolve(&self, target: Target) -> Result<u64, HubError> {
        let found = match target {
            Target::Seq(seq) => return Ok(seq),
            Target::Latest(LatestTarget::LastPhoto) => {
                self.store.entries().iter().rev().find(|e| e.kind == EntryKind::Photo && e.has_payload())
            }
            Target::Latest(LatestTarget::LastEntry) => self.store.entries().last(),
        };
        found.map(|e| e.seq).ok_or_else(|| HubError::NoTarget(format!("{target:?}")))
    }

    /// Redacts at the current clock.
    pub fn redact(&mut self, seq: u64, actor: &str) -> Result<Tombstone, HubError> {
        let already = self.store.get(seq).is_some_and(|e| e.redacted);
        let tomb = self.store.redact(seq, actor, self.clock)?;
        if !already {
            self.events.push(HubEvent::Redacted(tomb.clone()));
        }
        Ok(tomb)
    }

    pub fn annotate(&mut self, seq: u64, actor: &str, text: &str) -> Result<Annotation, HubError> {
        let annotation = self.store.annotate(seq, actor, text, self.clock)?;
        if let Some(e) = self.store.get(annotation.id) {
            self.events.push(HubEvent::Appended(e.clone()));
        }
        Ok(annotation)
    }

    /// Swaps in a new policy config, keeping live timers.
    pub fn reconfigure(&mut self, cfg: PolicyConfig, actor: &str) -> Result<u64, HubError> {
        validate_config(&cfg, &self.calibrations).map_err(HubError::InvalidConfig)?;
        let now = self.clock;
        self.advance(now)?;
        let extending = self.state.extend_until.is_some_and(|e| now < e);
        match cfg.base_mode {
            BaseMode::Timelapse if self.state.next_cadence_at.is_none() || self.cfg.cadence_ms != cfg.cadence_ms => {
                self.state.next_cadence_at = Some(now.plus(cfg.cadence_ms));
            }
            BaseMode::Timelapse => {}
            _ if extending && cfg.cadence_ms > 0 => {
                if self.state.next_cadence_at.is_none() {
                    self.state.next_cadence_at = Some(now.plus(cfg.cadence_ms));
                }
            }
            _ => self.state.next_cadence_at = None,
        }
        self.cfg = cfg;
        self.append(NewEntry::new(now, actor, EntryDetail::ConfigChange { actor: actor.to_string() }))
    }

    /// Correlates the photo at `seq` with the named reading channels.
    pub fn correlate(&self, seq: u64, streams: &[String], window_ms: u64) -> Result<Vec<StreamCorrelation>, HubError> {
        let photo = self.store.get(seq).ok_or(StoreError::NotFound(seq))?;
        let series: Vec<(String, DigitalSeries)> = streams
            .iter()
            .map(|name| (name.clone(), pipeline::digital_series(self.store.entries(), name)))
            .collect();
        pipeline::correlate(photo.ts, &series, window_ms).map_err(|e| HubError::NoTarget(e.to_string()))
    }

    fn append(&mut self, entry: NewEntry) -> Result<u64, HubError> {
        let seq = self.store.append(entry)?;
        if let Some(e) = self.store.get(seq) {
            self.events.push(HubEvent::Appended(e.clone()));
        }
        Ok(seq)
    }

    fn append_notices(&mut self, action: &PolicyAction) -> Result<(), HubError> {
        for n in notify::notices_for(std::slice::from_ref(action)) {
            self.append(NewEntry::new(n.ts, HUB_NODE, EntryDetail::Notice { notice: n.kind }))?;
        }
        Ok(())
    }

    fn apply(&mut self, actions: &[PolicyAction]) -> Result<(), HubError> {
        for action in actions {
            match *action {
                PolicyAction::CaptureNow { at, source, .. } => self.capture(action, at, source)?,
                PolicyAction::SuppressCapture { at, source, cause } => {
                    let semantic = semantic_of(CaptureOutcome::Suppressed { cause });
                    self.append(
                        NewEntry::new(at, HUB_NODE, EntryDetail::Suppression { source, cause }).with_semantic(semantic),
                    )?;
                }
                PolicyAction::OpenUnavailableInterval { at, cause } | PolicyAction::CloseUnavailableInterval { at, cause } => {
                    self.append_notices(action)?;
                    let edge = match action {
                        PolicyAction::OpenUnavailableInterval { .. } => IntervalEdge::Open,
                        _ => IntervalEdge::Close,
                    };
                    self.append(
                        NewEntry::new(at, HUB_NODE, EntryDetail::Interval { cause, edge })
                            .with_semantic(semantic_of(CaptureOutcome::UnavailableInterval)),
                    )?;
                }
                PolicyAction::EmitNotice { .. } => self.append_notices(action)?,
                PolicyAction::ScheduleTimer { .. } => {}
            }
        }
        Ok(())
    }

    /// One notice and one photo (or rejection trace) per camera with a scene.
    fn capture(&mut self, action: &PolicyAction, at: Timestamp, source: CaptureSource) -> Result<(), HubError> {
        let cameras: Vec<(String, Scene)> = self.scenes.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for (node, scene) in cameras {
            self.append_notices(action)?;
            let detail = EntryDetail::Photo { tags: scene.tags, source };
            let entry = match policy::admit_frame(scene.tags, self.cfg.perspective) {
                Admission::Admit => {
                    let payload = synth_payload(self.payload_seed, self.store.next_seq(), &node, at, scene.tags);
                    NewEntry::new(at, node, detail)
                        .with_semantic(semantic_of(CaptureOutcome::Stored { source }))
                        .with_payload(payload)
                }
                Admission::Reject(_) => NewEntry::new(at, node, detail)
                    .with_semantic(semantic_of(CaptureOutcome::PerspectiveRejected)),
            };
            self.append(entry)?;
        }
        Ok(())
    }
}

/// Deterministic stand-in for image bytes, unique per capture.
pub fn synth_payload(seed: u64, seq: u64, node: &str, at: Timestamp, tags: TagSet) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(seq.to_le_bytes());
    h.update(at.0.to_le_bytes());
    h.update([tags.bits()]);
    h.update(node.as_bytes());
    let key: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(key);
    let len = rng.random_range(256..1024);
    let mut bytes = vec![0u8; len];
    rng.fill(&mut bytes[..]);
    bytes
}

/// Cameras that have offered a frame, for diagnostics.
pub fn camera_nodes(hub: &Hub) -> BTreeSet<String> {
    hub.scenes.keys().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Control, Direction, NoticeKind, Perspective, ReactivePredicate};

    fn frame(ts: u64, tags: &str) -> Frame {
        Frame { node: "cam".into(), ts: Timestamp(ts), tags: tags.parse().unwrap(), payload_ref: None }
    }

    fn act(ts: u64, action: Action) -> ParticipantAction {
        ParticipantAction { actor: "p1".into(), ts: Timestamp(ts), action }
    }

    fn manual_hub(controls: &[Control]) -> Hub {
        let mut cfg = PolicyConfig { base_mode: BaseMode::Manual, perspective: Perspective::ActivityDriven, ..Default::default() };
        cfg.enabled_controls.extend(controls.iter().copied());
        Hub::new(cfg, Calibrations::new(), Store::in_memory(), 7).unwrap()
    }

    #[test]
    fn capture_notice_directly_precedes_photo() {
        let mut hub = manual_hub(&[]);
        hub.offer_frame(&frame(0, "object")).unwrap();
        hub.apply_action("panel", &act(10, Action::ManualCapture)).unwrap();
        let kinds: Vec<_> = hub.store().entries().iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EntryKind::Annotation, EntryKind::Notice, EntryKind::Photo]);
        let notice = hub.store().entries()[1].notice().unwrap();
        assert_eq!(notice.kind, NoticeKind::CaptureNotice);
        assert_eq!(hub.store().entries()[2].semantic, Some(OriginSemantic::Manual));
    }

    #[test]
    fn rejected_frames_store_no_payload() {
        let mut hub = manual_hub(&[]);
        hub.reconfigure(PolicyConfig { perspective: Perspective::ObjectOnly, ..hub.config().clone() }, "researcher").unwrap();
        hub.offer_frame(&frame(0, "object,face")).unwrap();
        hub.apply_action("panel", &act(10, Action::ManualCapture)).unwrap();
        let photo = hub.store().entries().iter().find(|e| e.kind == EntryKind::Photo).unwrap();
        assert_eq!(photo.semantic, Some(OriginSemantic::RejectedByPerspective));
        assert!(photo.payload_ref.is_none());
        assert!(hub.store().memory_payloads().is_empty());
    }

    #[test]
    fn unarmed_action_leaves_no_trace() {
        let mut hub = manual_hub(&[]);
        assert!(matches!(hub.apply_action("panel", &act(1, Action::Disable)), Err(HubError::NotArmed)));
        assert!(hub.store().is_empty());
        assert_eq!(hub.stats().rejections, 1);
    }

    #[test]
    fn disable_suppresses_capture_after() {
        let mut hub = manual_hub(&[Control::Disable, Control::CaptureAfter]);
        let cfg = PolicyConfig { capture_after_delay_ms: 1_000, disable_window_ms: 1_001, ..hub.config().clone() };
        hub.reconfigure(cfg, "r").unwrap();
        hub.offer_frame(&frame(0, "object")).unwrap();
        hub.apply_action("panel", &act(100, Action::CaptureAfter)).unwrap();
        hub.apply_action("panel", &act(100, Action::Disable)).unwrap();
        hub.advance(Timestamp(5_000)).unwrap();
        let stats = hub.stats();
        assert_eq!(stats.photos_stored, 0);
        let suppressed: Vec<_> = hub
            .store()
            .entries()
            .iter()
            .filter(|e| matches!(e.detail, EntryDetail::Suppression { source: CaptureSource::CaptureAfter, .. }))
            .collect();
        assert_eq!(suppressed.len(), 1);
    }

    #[test]
    fn readings_are_normalized_before_the_predicate() {
        let cfg = PolicyConfig {
            base_mode: BaseMode::Reactive,
            perspective: Perspective::ActivityDriven,
            reactive_predicate: Some(ReactivePredicate { channel: "lux".into(), threshold: 0.5, direction: Direction::Rising }),
            ..Default::default()
        };
        let mut cals = Calibrations::new();
        cals.insert("lux".into(), crate::model::Calibration::analog("lux", 0.0, 1000.0).unwrap());
        let mut hub = Hub::new(cfg, cals, Store::in_memory(), 1).unwrap();
        hub.offer_frame(&frame(0, "object")).unwrap();
        hub.ingest_reading(&SensorReading::new("s1", "lux", Timestamp(5), 400.0, "lx").unwrap()).unwrap();
        assert_eq!(hub.stats().photos_stored, 0);
        hub.ingest_reading(&SensorReading::new("s1", "lux", Timestamp(6), 600.0, "lx").unwrap()).unwrap();
        assert_eq!(hub.stats().photos_stored, 1);
        match &hub.store().entries()[0].detail {
            EntryDetail::Reading { normalized, .. } => assert_eq!(*normalized, Some(0.4)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn clock_never_goes_backwards() {
        let mut hub = manual_hub(&[]);
        hub.advance(Timestamp(100)).unwrap();
        hub.ingest_reading(&SensorReading::new("s", "x", Timestamp(50), 1.0, "").unwrap()).unwrap();
        assert_eq!(hub.store().entries()[0].ts, Timestamp(100));
    }

    #[test]
    fn redaction_via_action_needs_delete_after() {
        let mut hub = manual_hub(&[]);
        hub.offer_frame(&frame(0, "object")).unwrap();
        hub.apply_action("panel", &act(1, Action::ManualCapture)).unwrap();
        let redact = act(2, Action::Redact { target: Target::Latest(LatestTarget::LastPhoto) });
        assert!(matches!(hub.apply_action("panel", &redact), Err(HubError::NotArmed)));
        let mut hub2 = manual_hub(&[Control::DeleteAfter]);
        hub2.offer_frame(&frame(0, "object")).unwrap();
        hub2.apply_action("panel", &act(1, Action::ManualCapture)).unwrap();
        let seq = hub2.apply_action("panel", &redact).unwrap();
        assert!(hub2.store().get(seq).unwrap().redacted);
    }

    #[test]
    fn payloads_are_deterministic_and_distinct() {
        let tags: TagSet = "object".parse().unwrap();
        assert_eq!(synth_payload(1, 2, "cam", Timestamp(3), tags), synth_payload(1, 2, "cam", Timestamp(3), tags));
        assert_ne!(synth_payload(1, 2, "cam", Timestamp(3), tags), synth_payload(1, 3, "cam", Timestamp(3), tags));
    }
}
