//! Scenario files: an optional `#` metadata line followed by one JSON event
//! per line, sorted by time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::model::{Action, ActionKind, TagSet, Target, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Reading {
        channel: String,
        value: f64,
        #[serde(default)]
        unit: String,
    },
    FrameOffer {
        tags: TagSet,
    },
    Action {
        action: ActionKind,
        actor: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<Target>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub t: Timestamp,
    pub node: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl ScenarioEvent {
    /// The participant action carried by an action event.
    pub fn action(&self) -> Option<Result<Action, String>> {
        let EventKind::Action { action, target, text, .. } = &self.kind else { return None };
        Some(match (action, target, text) {
            (ActionKind::Redact, Some(target), _) => Ok(Action::Redact { target: *target }),
            (ActionKind::Annotate, Some(target), Some(text)) => {
                Ok(Action::Annotate { target: *target, text: text.clone() })
            }
            (ActionKind::Redact | ActionKind::Annotate, _, _) => {
                Err(format!("{} needs a target{}", action.as_str(), if *action == ActionKind::Annotate { " and text" } else { "" }))
            }
            (kind, _, _) => Ok(Action::simple(*kind).expect("parameterless action")),
        })
    }

    fn check(&self) -> Result<(), String> {
        if self.node.is_empty() {
            return Err("node must be non-empty".into());
        }
        match &self.kind {
            EventKind::Reading { channel, value, .. } => {
                if channel.is_empty() {
                    return Err("reading channel must be non-empty".into());
                }
                if !value.is_finite() {
                    return Err("reading value must be finite".into());
                }
            }
            EventKind::Action { actor, .. } if actor.is_empty() => return Err("action actor must be non-empty".into()),
            EventKind::Action { .. } => {
                self.action().expect("action event")?;
            }
            EventKind::FrameOffer { .. } => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Header {
    #[serde(default)]
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    /// Logical time the run lasts until; defaults to the last event.
    pub end: Option<Timestamp>,
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        Scenario::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut scenario = Scenario::default();
        let mut last = Timestamp::ZERO;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |reason: String| ScenarioError::Parse { line: line_no, reason };
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(meta) = trimmed.strip_prefix('#') {
                if idx != 0 {
                    return Err(err("metadata is only allowed on the first line".into()));
                }
                let header: Header = serde_json::from_str(meta.trim()).map_err(|e| err(e.to_string()))?;
                scenario.name = header.name;
                scenario.seed = header.seed;
                scenario.end = header.end.map(Timestamp);
                continue;
            }
            let event: ScenarioEvent = serde_json::from_str(trimmed).map_err(|e| err(e.to_string()))?;
            event.check().map_err(err)?;
            if event.t < last {
                return Err(err(format!("event at t={} is earlier than the previous event at t={}", event.t.0, last.0)));
            }
            last = event.t;
            scenario.events.push(event);
        }
        Ok(scenario)
    }

    pub fn to_text(&self) -> String {
        let header = Header { name: self.name.clone(), seed: self.seed, end: self.end.map(|t| t.0) };
        let mut out = format!("# {}\n", serde_json::to_string(&header).expect("header serializes"));
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Time the run is driven to.
    pub fn end_time(&self) -> Timestamp {
        let last = self.events.last().map_or(Timestamp::ZERO, |e| e.t);
        self.end.map_or(last, |end| end.max(last))
    }

    /// Events in injection order: by time, then node id, then file order.
    pub fn ordered(&self) -> Vec<&ScenarioEvent> {
        let mut events: Vec<&ScenarioEvent> = self.events.iter().collect();
        events.sort_by(|a, b| a.t.cmp(&b.t).then_with(|| a.node.cmp(&b.node)));
        events
    }
}
