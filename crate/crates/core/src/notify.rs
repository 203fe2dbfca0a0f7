//! Human-directed notices around sensing and capturing.

use serde::{Deserialize, Serialize};

use crate::model::{NoticeKind, ReactivePredicate, SensorReading, Timestamp};
use crate::policy::PolicyAction;

/// Broker channel carrying notices for actuators and the canvas.
pub const NOTICE_CHANNEL: &str = "notices";

/// A notice before it has been sequenced into the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notice {
    pub kind: NoticeKind,
    pub ts: Timestamp,
}

/// Sensing notice on the false-to-true edge of the predicate, nothing on
/// sustained presence or on the falling edge.
pub fn presence_edge(prev: bool, reading: &SensorReading, predicate: &ReactivePredicate) -> Option<Notice> {
    debug_assert_eq!(reading.channel, predicate.channel);
    (!prev && predicate.is_active(reading.value)).then_some(Notice { kind: NoticeKind::SensingNotice, ts: reading.ts })
}

/// Notices owed for the actions of one transition, in action order. Callers
/// append each action's notices before applying the action itself.
pub fn notices_for(actions: &[PolicyAction]) -> Vec<Notice> {
    actions
        .iter()
        .filter_map(|action| match *action {
            PolicyAction::CaptureNow { at, .. } => Some(Notice { kind: NoticeKind::CaptureNotice, ts: at }),
            PolicyAction::OpenUnavailableInterval { at, .. } => {
                Some(Notice { kind: NoticeKind::DisabledNotice, ts: at })
            }
            PolicyAction::EmitNotice { at, notice } => Some(Notice { kind: notice, ts: at }),
            _ => None,
        })
        .collect()
}

/// Payload published on [`NOTICE_CHANNEL`].
pub fn wire_data(notice: &Notice) -> serde_json::Map<String, serde_json::Value> {
    let mut data = serde_json::Map::new();
    data.insert("kind".into(), notice.kind.as_str().into());
    data.insert("ts".into(), notice.ts.0.into());
    data
}
