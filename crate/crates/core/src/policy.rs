//! Capture-policy state machine.
//!
//! Composes the base acquisition mode with participant controls and decides,
//! for every trigger instant, whether a capture happens and why. All
//! transitions are pure functions of `(state, config, input, now)`.
//!
//! Precedence, strongest first: switch off, disable window, postpone (only
//! against automated triggers), then the trigger itself.

use serde::{Deserialize, Serialize};

use crate::model::{
    Action, BaseMode, CaptureSource, IntervalCause, NoticeKind, ParticipantAction, PendingCapture, Perspective,
    PolicyConfig, PolicyState, SensorReading, SuppressionCause, TagSet, Timestamp, Trigger,
};
use crate::notify;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allow,
    Suppress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    SwitchedOff,
    DisabledWindow,
    Postponed,
    NoTrigger,
    OkReactive,
    OkCadence,
    OkExplicit,
}

impl Reason {
    /// The suppression trace this reason leaves, if any.
    pub fn suppression_cause(self) -> Option<SuppressionCause> {
        match self {
            Reason::SwitchedOff => Some(SuppressionCause::SwitchedOff),
            Reason::DisabledWindow => Some(SuppressionCause::DisabledWindow),
            Reason::Postponed => Some(SuppressionCause::Postponed),
            _ => None,
        }
    }
}

/// Verdict and reason; the verdict is derived from the reason so the two
/// can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub verdict: Verdict,
    pub reason: Reason,
}

impl From<Reason> for PolicyDecision {
    fn from(reason: Reason) -> Self {
        let verdict = match reason {
            Reason::OkReactive | Reason::OkCadence | Reason::OkExplicit => Verdict::Allow,
            _ => Verdict::Suppress,
        };
        PolicyDecision { verdict, reason }
    }
}

impl PolicyDecision {
    pub fn allowed(&self) -> bool {
        self.verdict == Verdict::Allow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimerKind {
    DisableExpiry,
    PostponeExpiry,
    ExtendExpiry,
    PendingCapture,
    Cadence,
}

/// Effect requested by a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyAction {
    CaptureNow { at: Timestamp, source: CaptureSource, reason: Reason },
    /// A trigger fired but the decision was to suppress it.
    SuppressCapture { at: Timestamp, source: CaptureSource, cause: SuppressionCause },
    OpenUnavailableInterval { at: Timestamp, cause: IntervalCause },
    CloseUnavailableInterval { at: Timestamp, cause: IntervalCause },
    EmitNotice { at: Timestamp, notice: NoticeKind },
    ScheduleTimer { at: Timestamp, timer: TimerKind },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyInput<'a> {
    Action(&'a ParticipantAction),
    Reading(&'a SensorReading),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("control not armed")]
    NotArmed,
}

pub type Transition = (PolicyState, Vec<PolicyAction>);

/// Applies an action or reading at `now`. Timers due at or before `now` are
/// matured first, so the returned actions start with whatever `tick` would
/// have produced.
///
/// Readings should carry the value the predicate is meant to see (the hub
/// passes normalized values for calibrated channels).
pub fn ingest(
    state: &PolicyState,
    cfg: &PolicyConfig,
    input: PolicyInput<'_>,
    now: Timestamp,
) -> Result<Transition, PolicyError> {
    if let PolicyInput::Action(action) = input {
        if !cfg.accepts(action.action.kind()) {
            return Err(PolicyError::NotArmed);
        }
    }
    let (mut st, mut out) = tick(state, cfg, now);
    match input {
        PolicyInput::Reading(reading) => apply_reading(&mut st, cfg, reading, now, &mut out),
        PolicyInput::Action(action) => apply_action(&mut st, cfg, &action.action, now, &mut out),
    }
    Ok((st, out))
}

fn apply_reading(
    st: &mut PolicyState,
    cfg: &PolicyConfig,
    reading: &SensorReading,
    now: Timestamp,
    out: &mut Vec<PolicyAction>,
) {
    let Some(pred) = &cfg.reactive_predicate else { return };
    if reading.channel != pred.channel {
        return;
    }
    if let Some(notice) = notify::presence_edge(st.presence, reading, pred) {
        out.push(PolicyAction::EmitNotice { at: now, notice: notice.kind });
        if cfg.base_mode == BaseMode::Reactive {
            out.extend(resolve(st, cfg, CaptureSource::Reactive, now));
        }
    }
    st.presence = pred.is_active(reading.value);
}

fn apply_action(st: &mut PolicyState, cfg: &PolicyConfig, action: &Action, now: Timestamp, out: &mut Vec<PolicyAction>) {
    match action {
        Action::Disable => {
            let already = st.disable_until.is_some_and(|d| now < d);
            let until = now.plus(cfg.disable_window_ms);
            st.disable_until = Some(until);
            if !already {
                out.push(PolicyAction::OpenUnavailableInterval { at: now, cause: IntervalCause::Disable });
            }
            out.push(PolicyAction::ScheduleTimer { at: until, timer: TimerKind::DisableExpiry });
        }
        Action::Postpone => {
            let until = now.plus(cfg.postpone_delay_ms);
            st.postpone_until = Some(until);
            out.push(PolicyAction::ScheduleTimer { at: until, timer: TimerKind::PostponeExpiry });
        }
        Action::ToggleSwitch => {
            st.switch_on = !st.switch_on;
            out.push(if st.switch_on {
                PolicyAction::CloseUnavailableInterval { at: now, cause: IntervalCause::Switch }
            } else {
                PolicyAction::OpenUnavailableInterval { at: now, cause: IntervalCause::Switch }
            });
        }
        Action::Extend => {
            let until = now.plus(cfg.extend_window_ms);
            st.extend_until = Some(until);
            out.push(PolicyAction::ScheduleTimer { at: until, timer: TimerKind::ExtendExpiry });
            if cfg.base_mode != BaseMode::Timelapse && st.next_cadence_at.is_none() && cfg.cadence_ms > 0 {
                let next = now.plus(cfg.cadence_ms);
                st.next_cadence_at = Some(next);
                out.push(PolicyAction::ScheduleTimer { at: next, timer: TimerKind::Cadence });
            }
        }
        Action::CaptureAfter => {
            let at = now.plus(cfg.capture_after_delay_ms);
            push_pending(st, PendingCapture { at, source: CaptureSource::CaptureAfter });
            out.push(PolicyAction::ScheduleTimer { at, timer: TimerKind::PendingCapture });
        }
        Action::ManualCapture => {
            push_pending(st, PendingCapture { at: now, source: CaptureSource::Manual });
            out.push(PolicyAction::ScheduleTimer { at: now, timer: TimerKind::PendingCapture });
        }
        // Store concerns; no policy transition.
        Action::Redact { .. } | Action::Annotate { .. } => {}
    }
}

fn push_pending(st: &mut PolicyState, capture: PendingCapture) {
    let idx = st.pending_captures.partition_point(|p| p.at <= capture.at);
    st.pending_captures.insert(idx, capture);
}

/// Turns a trigger into a capture or a suppression trace. `no_trigger`
/// yields nothing.
fn resolve(st: &PolicyState, cfg: &PolicyConfig, source: CaptureSource, at: Timestamp) -> Option<PolicyAction> {
    let decision = decide_capture(st, cfg, source.trigger(), at);
    if decision.allowed() {
        return Some(PolicyAction::CaptureNow { at, source, reason: decision.reason });
    }
    decision.reason.suppression_cause().map(|cause| PolicyAction::SuppressCapture { at, source, cause })
}

/// Earliest timer deadline held by the state.
pub fn next_deadline(state: &PolicyState) -> Option<Timestamp> {
    due_timer(state, Timestamp(u64::MAX)).map(|(at, _)| at)
}

/// Earliest due timer at or before `now`. Ties resolve expiries before
/// captures so that a window ending at `t` no longer covers `t`.
fn due_timer(state: &PolicyState, now: Timestamp) -> Option<(Timestamp, TimerKind)> {
    [
        (state.disable_until, TimerKind::DisableExpiry),
        (state.postpone_until, TimerKind::PostponeExpiry),
        (state.extend_until, TimerKind::ExtendExpiry),
        (state.pending_captures.first().map(|p| p.at), TimerKind::PendingCapture),
        (state.next_cadence_at, TimerKind::Cadence),
    ]
    .into_iter()
    .filter_map(|(at, kind)| at.filter(|t| *t <= now).map(|t| (t, kind)))
    .min_by_key(|(t, kind)| (*t, *kind as u8))
}

/// Matures every timer due at or before `now`, in deadline order.
pub fn tick(state: &PolicyState, cfg: &PolicyConfig, now: Timestamp) -> Transition {
    let mut st = state.clone();
    let mut out = Vec::new();
    while let Some((at, timer)) = due_timer(&st, now) {
        match timer {
            TimerKind::DisableExpiry => {
                st.disable_until = None;
                out.push(PolicyAction::CloseUnavailableInterval { at, cause: IntervalCause::Disable });
            }
            TimerKind::PostponeExpiry => st.postpone_until = None,
            TimerKind::ExtendExpiry => {
                st.extend_until = None;
                if cfg.base_mode != BaseMode::Timelapse {
                    st.next_cadence_at = None;
                }
            }
            TimerKind::PendingCapture => {
                let pending = st.pending_captures.remove(0);
                out.extend(resolve(&st, cfg, pending.source, at));
            }
            TimerKind::Cadence => {
                out.extend(resolve(&st, cfg, CaptureSource::Cadence, at));
                st.next_cadence_at = (cfg.cadence_ms > 0).then(|| at.plus(cfg.cadence_ms));
                if let Some(next) = st.next_cadence_at {
                    out.push(PolicyAction::ScheduleTimer { at: next, timer: TimerKind::Cadence });
                }
            }
        }
    }
    (st, out)
}

/// Applies the precedence table to one trigger instant.
pub fn decide_capture(state: &PolicyState, cfg: &PolicyConfig, trigger: Trigger, now: Timestamp) -> PolicyDecision {
    let reason = if !state.switch_on {
        Reason::SwitchedOff
    } else if state.disable_until.is_some_and(|d| now < d) {
        Reason::DisabledWindow
    } else if trigger != Trigger::Explicit && state.postpone_until.is_some_and(|d| now < d) {
        Reason::Postponed
    } else {
        match trigger {
            Trigger::Explicit => Reason::OkExplicit,
            Trigger::Reactive if cfg.base_mode == BaseMode::Reactive => Reason::OkReactive,
            Trigger::Cadence
                if cfg.base_mode == BaseMode::Timelapse || state.extend_until.is_some_and(|e| now < e) =>
            {
                Reason::OkCadence
            }
            _ => Reason::NoTrigger,
        }
    };
    reason.into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    FacePresent,
    BodyPresent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admission {
    Admit,
    Reject(RejectReason),
}

/// Observational-perspective filter over a frame's content tags.
pub fn admit_frame(tags: TagSet, perspective: Perspective) -> Admission {
    let face = if tags.face { Some(RejectReason::FacePresent) } else { None };
    let rejection = match perspective {
        Perspective::ObjectOnly => face.or(tags.body.then_some(RejectReason::BodyPresent)),
        Perspective::InteractionDriven => face,
        Perspective::ActivityDriven => None,
    };
    rejection.map_or(Admission::Admit, Admission::Reject)
}
