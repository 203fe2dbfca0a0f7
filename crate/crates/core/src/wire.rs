//! Broker wire format and the live-stream event vocabulary.
//!
//! Broker frames are single-line JSON objects tagged by `op`. Message data is
//! a flat map of numbers, strings and booleans.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::model::{
    Action, ActionKind, Frame, LatestTarget, NoticeKind, OriginSemantic, ParticipantAction, SensorReading, TagSet,
    Target, TimelineEntry, Timestamp,
};
use crate::simnet::{EventKind, ScenarioEvent};

/// Largest serialized frame, newline excluded.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

pub const READINGS: &str = "readings";
pub const FRAMES: &str = "frames";
pub const ACTIONS: &str = "actions";
/// Moves a driven clock forward; a `sync` field asks for an acknowledgment.
pub const CLOCK: &str = "clock";
pub const NOTICES: &str = crate::notify::NOTICE_CHANNEL;
pub const PHOTOS: &str = "photos";
pub const SYNC_REPLY: &str = "hub.sync";

/// Channels the hub listens on.
pub const HUB_INPUTS: [&str; 4] = [READINGS, FRAMES, ACTIONS, CLOCK];

pub type Data = Map<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum WireOp {
    Hello { client: String },
    Welcome,
    Subscribe { channel: String },
    Subscribed { channel: String },
    Send { channel: String, ts: Timestamp, data: Data },
    Message { channel: String, sender: String, ts: Timestamp, data: Data },
    Error { reason: String },
}

impl WireOp {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire ops serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub channel: String,
    pub sender: String,
    pub ts: Timestamp,
    pub data: Data,
}

impl WireMessage {
    pub fn new(channel: impl Into<String>, sender: impl Into<String>, ts: Timestamp, data: Data) -> Self {
        WireMessage { channel: channel.into(), sender: sender.into(), ts, data }
    }

    pub fn validate(&self) -> Result<(), String> {
        check_channel(&self.channel)?;
        if self.sender.is_empty() {
            return Err("sender must be non-empty".into());
        }
        if let Some((k, _)) = self.data.iter().find(|(_, v)| !(v.is_number() || v.is_string() || v.is_boolean())) {
            return Err(format!("data field {k:?} must be a number, string or boolean"));
        }
        Ok(())
    }

    pub fn to_op(&self) -> WireOp {
        WireOp::Message { channel: self.channel.clone(), sender: self.sender.clone(), ts: self.ts, data: self.data.clone() }
    }
}

/// Channel names: 1 to 128 characters from `[A-Za-z0-9._/-]`.
pub fn check_channel(name: &str) -> Result<(), String> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-' | '/'));
    if ok {
        Ok(())
    } else {
        Err(format!("malformed channel name {name:?}"))
    }
}

/// A broker message the hub understands.
#[derive(Debug, Clone, PartialEq)]
pub enum HubInput {
    Reading(SensorReading),
    Frame(Frame),
    Action { node: String, action: ParticipantAction },
    Clock { ts: Timestamp, sync: Option<Value> },
}

fn text<'a>(data: &'a Data, key: &str) -> Result<&'a str, String> {
    data.get(key).and_then(Value::as_str).ok_or_else(|| format!("missing string field {key:?}"))
}

fn target_of(data: &Data) -> Result<Option<Target>, String> {
    match data.get("target") {
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| format!("bad target: {e}")),
    }
}

/// Decodes a hub input. A `node` data field names the originating node when
/// a gateway publishes on its behalf; otherwise the sender is the node.
pub fn decode_input(msg: &WireMessage) -> Result<HubInput, String> {
    let d = &msg.data;
    let node = d.get("node").and_then(Value::as_str).unwrap_or(&msg.sender).to_string();
    match msg.channel.as_str() {
        READINGS => {
            let value = d.get("value").and_then(Value::as_f64).ok_or("missing numeric field \"value\"")?;
            let unit = d.get("unit").and_then(Value::as_str).unwrap_or_default();
            SensorReading::new(node, text(d, "channel")?, msg.ts, value, unit)
                .map(HubInput::Reading)
                .map_err(|e| e.to_string())
        }
        FRAMES => {
            let tags: TagSet = text(d, "tags")?.parse().map_err(|e: crate::ModelError| e.to_string())?;
            Ok(HubInput::Frame(Frame { node, ts: msg.ts, tags, payload_ref: None }))
        }
        ACTIONS => {
            let kind: ActionKind = text(d, "action")?.parse().map_err(|e: crate::ModelError| e.to_string())?;
            let action = match kind {
                ActionKind::Redact => Action::Redact { target: target_of(d)?.ok_or("redact needs a target")? },
                ActionKind::Annotate => Action::Annotate {
                    target: target_of(d)?.ok_or("annotate needs a target")?,
                    text: text(d, "text")?.to_string(),
                },
                other => Action::simple(other).expect("parameterless"),
            };
            let actor = text(d, "actor")?.to_string();
            Ok(HubInput::Action { node, action: ParticipantAction { actor, ts: msg.ts, action } })
        }
        CLOCK => Ok(HubInput::Clock { ts: msg.ts, sync: d.get("sync").cloned() }),
        other => Err(format!("hub does not consume channel {other:?}")),
    }
}

/// Channel and data carrying a scenario event over the broker.
pub fn encode_event(event: &ScenarioEvent) -> (&'static str, Data) {
    let mut d = Data::new();
    d.insert("node".into(), event.node.clone().into());
    let channel = match &event.kind {
        EventKind::Reading { channel, value, unit } => {
            d.insert("channel".into(), channel.clone().into());
            d.insert("value".into(), (*value).into());
            d.insert("unit".into(), unit.clone().into());
            READINGS
        }
        EventKind::FrameOffer { tags } => {
            d.insert("tags".into(), tags.to_string().into());
            FRAMES
        }
        EventKind::Action { action, actor, target, text } => {
            d.insert("action".into(), action.as_str().into());
            d.insert("actor".into(), actor.clone().into());
            match target {
                Some(Target::Seq(seq)) => {
                    d.insert("target".into(), (*seq).into());
                }
                Some(Target::Latest(l)) => {
                    let name = match l {
                        LatestTarget::LastPhoto => "last_photo",
                        LatestTarget::LastEntry => "last_entry",
                    };
                    d.insert("target".into(), name.into());
                }
                None => {}
            }
            if let Some(t) = text {
                d.insert("text".into(), t.clone().into());
            }
            ACTIONS
        }
    };
    (channel, d)
}

/// What the live WebSocket pushes, in timeline order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LiveEvent {
    Notice { kind: NoticeKind, ts: Timestamp, seq: u64 },
    Entry { entry: TimelineEntry },
    Redaction { seq: u64, actor: String, ts: Timestamp },
    /// The client fell behind and `missed` events were dropped.
    Gap { missed: u64 },
}

/// Data published on the photos channel: metadata only.
pub fn photo_data(entry: &TimelineEntry) -> Data {
    let mut d = Data::new();
    d.insert("seq".into(), entry.seq.into());
    d.insert("node".into(), entry.node.clone().into());
    d.insert("semantic".into(), entry.semantic.map_or("", OriginSemantic::as_str).into());
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{gen_random, GenParams};

    #[test]
    fn ops_are_bit_exact() {
        assert_eq!(WireOp::Hello { client: "cam1".into() }.to_line(), r#"{"op":"hello","client":"cam1"}"#);
        assert_eq!(WireOp::Welcome.to_line(), r#"{"op":"welcome"}"#);
        let mut data = Data::new();
        data.insert("v".into(), 1.into());
        let msg = WireOp::Message { channel: "photos".into(), sender: "hub".into(), ts: Timestamp(5), data };
        assert_eq!(msg.to_line(), r#"{"op":"message","channel":"photos","sender":"hub","ts":5,"data":{"v":1}}"#);
        let send: WireOp = serde_json::from_str(r#"{"op":"send","channel":"x","ts":1,"data":{}}"#).unwrap();
        assert!(matches!(send, WireOp::Send { .. }));
    }

    #[test]
    fn channel_names_are_checked() {
        assert!(check_channel("hub.sync").is_ok());
        assert!(check_channel("").is_err());
        assert!(check_channel("a b").is_err());
        assert!(check_channel(&"x".repeat(129)).is_err());
    }

    #[test]
    fn nested_data_is_refused() {
        let mut data = Data::new();
        data.insert("tags".into(), serde_json::json!(["face"]));
        assert!(WireMessage::new("frames", "cam", Timestamp(0), data).validate().is_err());
    }

    #[test]
    fn scenario_events_survive_the_wire() {
        let s = gen_random(5, &GenParams::default());
        for e in &s.events {
            let (channel, data) = encode_event(e);
            let msg = WireMessage::new(channel, "simnet", e.t, data);
            msg.validate().unwrap();
            match (decode_input(&msg).unwrap(), &e.kind) {
                (HubInput::Reading(r), EventKind::Reading { value, .. }) => {
                    assert_eq!((r.value, r.node.as_str()), (*value, e.node.as_str()))
                }
                (HubInput::Frame(f), EventKind::FrameOffer { tags }) => assert_eq!((f.tags, f.node), (*tags, e.node.clone())),
                (HubInput::Action { action, node }, EventKind::Action { .. }) => {
                    assert_eq!((action.action, node), (e.action().unwrap().unwrap(), e.node.clone()))
                }
                other => panic!("{other:?}"),
            }
        }
    }
}
