//! Domain types shared by every part of the hub.
//!
//! Values here carry no behavior beyond construction and validation. Types
//! whose invariants can be violated by untrusted input (readings, frames,
//! calibrations) validate on construction and on deserialization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Logical milliseconds since the hub epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn ms(self) -> u64 {
        self.0
    }

    pub fn plus(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(ms))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Camera,
    Sensor,
    Control,
}

/// Physical form of a node. Recorded for reports only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormLabel {
    #[default]
    Everyday,
    Estranged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub id: String,
    pub kind: NodeKind,
    pub channel: String,
    #[serde(default)]
    pub location: String,
    #[serde(default)]
    pub form_label: FormLabel,
}

/// Checks id uniqueness and non-empty channels across a node list.
pub fn validate_nodes(nodes: &[NodeDescriptor]) -> Result<(), Vec<Violation>> {
    let mut seen = BTreeSet::new();
    let mut violations = Vec::new();
    for node in nodes {
        if node.id.is_empty() {
            violations.push(Violation::new("node id must be non-empty"));
        } else if !seen.insert(node.id.as_str()) {
            violations.push(Violation::new(format!("duplicate node id {:?}", node.id)));
        }
        if node.channel.is_empty() {
            violations.push(Violation::new(format!("node {:?} has an empty channel", node.id)));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReading")]
pub struct SensorReading {
    pub node: String,
    pub channel: String,
    pub ts: Timestamp,
    pub value: f64,
    #[serde(default)]
    pub unit: String,
}

#[derive(Deserialize)]
struct RawReading {
    node: String,
    channel: String,
    ts: Timestamp,
    value: f64,
    #[serde(default)]
    unit: String,
}

impl TryFrom<RawReading> for SensorReading {
    type Error = ModelError;

    fn try_from(raw: RawReading) -> Result<Self, Self::Error> {
        SensorReading::new(raw.node, raw.channel, raw.ts, raw.value, raw.unit)
    }
}

impl SensorReading {
    pub fn new(
        node: impl Into<String>,
        channel: impl Into<String>,
        ts: Timestamp,
        value: f64,
        unit: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if !value.is_finite() {
            return Err(ModelError::Invalid(format!("reading value {value} is not finite")));
        }
        let channel = channel.into();
        if channel.is_empty() {
            return Err(ModelError::Invalid("reading channel must be non-empty".into()));
        }
        Ok(SensorReading { node: node.into(), channel, ts, value, unit: unit.into() })
    }
}

/// Symbolic content of a camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Object,
    Body,
    Face,
}

impl FromStr for Tag {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "object" => Ok(Tag::Object),
            "body" => Ok(Tag::Body),
            "face" => Ok(Tag::Face),
            other => Err(ModelError::Invalid(format!("unknown frame tag {other:?}"))),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::Object => "object",
            Tag::Body => "body",
            Tag::Face => "face",
        })
    }
}

/// Non-empty subset of {object, body, face}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Tag>", into = "Vec<Tag>")]
pub struct TagSet {
    pub object: bool,
    pub body: bool,
    pub face: bool,
}

impl TagSet {
    pub fn new(tags: impl IntoIterator<Item = Tag>) -> Result<Self, ModelError> {
        let mut set = TagSet { object: false, body: false, face: false };
        for tag in tags {
            match tag {
                Tag::Object => set.object = true,
                Tag::Body => set.body = true,
                Tag::Face => set.face = true,
            }
        }
        if set.is_empty() {
            return Err(ModelError::Invalid("frame tags must be non-empty".into()));
        }
        Ok(set)
    }

    pub fn contains(&self, tag: Tag) -> bool {
        match tag {
            Tag::Object => self.object,
            Tag::Body => self.body,
            Tag::Face => self.face,
        }
    }

    fn is_empty(&self) -> bool {
        !(self.object || self.body || self.face)
    }

    pub fn iter(&self) -> impl Iterator<Item = Tag> + '_ {
        [Tag::Object, Tag::Body, Tag::Face].into_iter().filter(|t| self.contains(*t))
    }

    /// Index in 1..=7, handy for enumerating every non-empty set.
    pub fn bits(&self) -> u8 {
        self.object as u8 | (self.body as u8) << 1 | (self.face as u8) << 2
    }

    pub fn from_bits(bits: u8) -> Result<Self, ModelError> {
        TagSet::new(
            [(1, Tag::Object), (2, Tag::Body), (4, Tag::Face)]
                .into_iter()
                .filter(|(b, _)| bits & b != 0)
                .map(|(_, t)| t),
        )
    }
}

impl TryFrom<Vec<Tag>> for TagSet {
    type Error = ModelError;

    fn try_from(tags: Vec<Tag>) -> Result<Self, Self::Error> {
        TagSet::new(tags)
    }
}

impl From<TagSet> for Vec<Tag> {
    fn from(set: TagSet) -> Self {
        set.iter().collect()
    }
}

impl FromStr for TagSet {
    type Err = ModelError;

    /// Parses a comma-separated list such as `object,face`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tags = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Tag::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        TagSet::new(tags)
    }
}

impl fmt::Display for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Content hash naming a payload file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PayloadRef(pub String);

impl fmt::Display for PayloadRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub node: String,
    pub ts: Timestamp,
    pub tags: TagSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<PayloadRef>,
}

/// Entry a redaction or annotation points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Seq(u64),
    Latest(LatestTarget),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatestTarget {
    /// Most recent photo that still holds a payload.
    LastPhoto,
    LastEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Disable,
    Postpone,
    ToggleSwitch,
    Extend,
    CaptureAfter,
    ManualCapture,
    Redact,
    Annotate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 8] = [
        ActionKind::Disable,
        ActionKind::Postpone,
        ActionKind::ToggleSwitch,
        ActionKind::Extend,
        ActionKind::CaptureAfter,
        ActionKind::ManualCapture,
        ActionKind::Redact,
        ActionKind::Annotate,
    ];

    /// Control that must be armed for this action to be accepted. Manual
    /// captures and annotations are always available.
    pub fn required_control(self) -> Option<Control> {
        match self {
            ActionKind::Disable => Some(Control::Disable),
            ActionKind::Postpone => Some(Control::Postpone),
            ActionKind::ToggleSwitch => Some(Control::Switch),
            ActionKind::Extend => Some(Control::Extend),
            ActionKind::CaptureAfter => Some(Control::CaptureAfter),
            ActionKind::Redact => Some(Control::DeleteAfter),
            ActionKind::ManualCapture | ActionKind::Annotate => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Disable => "disable",
            ActionKind::Postpone => "postpone",
            ActionKind::ToggleSwitch => "toggle_switch",
            ActionKind::Extend => "extend",
            ActionKind::CaptureAfter => "capture_after",
            ActionKind::ManualCapture => "manual_capture",
            ActionKind::Redact => "redact",
            ActionKind::Annotate => "annotate",
        }
    }
}

impl FromStr for ActionKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::Invalid(format!("unknown action kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Disable,
    Postpone,
    ToggleSwitch,
    Extend,
    CaptureAfter,
    ManualCapture,
    Redact { target: Target },
    Annotate { target: Target, text: String },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Disable => ActionKind::Disable,
            Action::Postpone => ActionKind::Postpone,
            Action::ToggleSwitch => ActionKind::ToggleSwitch,
            Action::Extend => ActionKind::Extend,
            Action::CaptureAfter => ActionKind::CaptureAfter,
            Action::ManualCapture => ActionKind::ManualCapture,
            Action::Redact { .. } => ActionKind::Redact,
            Action::Annotate { .. } => ActionKind::Annotate,
        }
    }

    /// Builds a parameterless action. Redact and annotate need a target.
    pub fn simple(kind: ActionKind) -> Option<Action> {
        Some(match kind {
            ActionKind::Disable => Action::Disable,
            ActionKind::Postpone => Action::Postpone,
            ActionKind::ToggleSwitch => Action::ToggleSwitch,
            ActionKind::Extend => Action::Extend,
            ActionKind::CaptureAfter => Action::CaptureAfter,
            ActionKind::ManualCapture => Action::ManualCapture,
            ActionKind::Redact | ActionKind::Annotate => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantAction {
    pub actor: String,
    pub ts: Timestamp,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    Disable,
    DeleteAfter,
    Postpone,
    Switch,
    Extend,
    CaptureAfter,
}

impl Control {
    pub const ALL: [Control; 6] = [
        Control::Disable,
        Control::DeleteAfter,
        Control::Postpone,
        Control::Switch,
        Control::Extend,
        Control::CaptureAfter,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMode {
    Reactive,
    Timelapse,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Active while value >= threshold.
    Rising,
    /// Active while value <= threshold.
    Falling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactivePredicate {
    pub channel: String,
    pub threshold: f64,
    #[serde(default = "default_direction")]
    pub direction: Direction,
}

fn default_direction() -> Direction {
    Direction::Rising
}

impl ReactivePredicate {
    pub fn is_active(&self, value: f64) -> bool {
        match self.direction {
            Direction::Rising => value >= self.threshold,
            Direction::Falling => value <= self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perspective {
    ObjectOnly,
    InteractionDriven,
    ActivityDriven,
}

pub const DEFAULT_DISABLE_WINDOW_MS: u64 = 300_000;
pub const DEFAULT_POSTPONE_DELAY_MS: u64 = 120_000;
pub const DEFAULT_EXTEND_WINDOW_MS: u64 = 60_000;
pub const DEFAULT_CAPTURE_AFTER_DELAY_MS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub base_mode: BaseMode,
    pub cadence_ms: u64,
    pub reactive_predicate: Option<ReactivePredicate>,
    pub enabled_controls: BTreeSet<Control>,
    pub disable_window_ms: u64,
    pub postpone_delay_ms: u64,
    pub extend_window_ms: u64,
    pub capture_after_delay_ms: u64,
    pub perspective: Perspective,
    /// Drop sensor readings from the timeline while a disable window is open.
    pub disable_suppresses_readings: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            base_mode: BaseMode::Timelapse,
            cadence_ms: 60_000,
            reactive_predicate: None,
            enabled_controls: BTreeSet::new(),
            disable_window_ms: DEFAULT_DISABLE_WINDOW_MS,
            postpone_delay_ms: DEFAULT_POSTPONE_DELAY_MS,
            extend_window_ms: DEFAULT_EXTEND_WINDOW_MS,
            capture_after_delay_ms: DEFAULT_CAPTURE_AFTER_DELAY_MS,
            perspective: Perspective::ObjectOnly,
            disable_suppresses_readings: false,
        }
    }
}

impl PolicyConfig {
    pub fn is_armed(&self, control: Control) -> bool {
        self.enabled_controls.contains(&control)
    }

    /// Whether an action of this kind may be applied under this config.
    pub fn accepts(&self, kind: ActionKind) -> bool {
        kind.required_control().is_none_or(|c| self.is_armed(c))
    }
}

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Violation(pub String);

impl Violation {
    pub fn new(msg: impl Into<String>) -> Self {
        Violation(msg.into())
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Calibrations keyed by channel.
pub type Calibrations = BTreeMap<String, Calibration>;

/// Returns every violated invariant of `cfg`, checked against the calibration
/// of the reactive predicate's channel when one exists.
pub fn validate_config(cfg: &PolicyConfig, calibrations: &Calibrations) -> Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if cfg.base_mode == BaseMode::Timelapse && cfg.cadence_ms == 0 {
        v.push(Violation::new("cadence must be positive"));
    }
    let timers = [
        (Control::Disable, cfg.disable_window_ms, "disable window must be positive"),
        (Control::Postpone, cfg.postpone_delay_ms, "postpone delay must be positive"),
        (Control::Extend, cfg.extend_window_ms, "extend window must be positive"),
        (Control::CaptureAfter, cfg.capture_after_delay_ms, "capture-after delay must be positive"),
    ];
    for (control, value, msg) in timers {
        if cfg.is_armed(control) && value == 0 {
            v.push(Violation::new(msg));
        }
    }
    if cfg.is_armed(Control::Extend) && cfg.cadence_ms == 0 {
        v.push(Violation::new("extend requires a positive cadence"));
    }
    match &cfg.reactive_predicate {
        None if cfg.base_mode == BaseMode::Reactive => {
            v.push(Violation::new("reactive mode requires a predicate"));
        }
        None => {}
        Some(pred) => {
            if pred.channel.is_empty() {
                v.push(Violation::new("predicate channel must be non-empty"));
            }
            if !pred.threshold.is_finite() {
                v.push(Violation::new("predicate threshold must be finite"));
            }
            if calibrations.get(&pred.channel).is_some_and(|c| c.degenerate) {
                v.push(Violation::new(format!(
                    "degenerate calibration on predicate channel {:?}",
                    pred.channel
                )));
            }
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Why a capture was requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureSource {
    Reactive,
    Cadence,
    CaptureAfter,
    Manual,
}

impl CaptureSource {
    pub fn trigger(self) -> Trigger {
        match self {
            CaptureSource::Reactive => Trigger::Reactive,
            CaptureSource::Cadence => Trigger::Cadence,
            CaptureSource::CaptureAfter | CaptureSource::Manual => Trigger::Explicit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Reactive,
    Cadence,
    Explicit,
}

/// A participant-requested capture waiting for its deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingCapture {
    pub at: Timestamp,
    pub source: CaptureSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyState {
    pub switch_on: bool,
    pub disable_until: Option<Timestamp>,
    pub postpone_until: Option<Timestamp>,
    pub extend_until: Option<Timestamp>,
    /// Sorted by deadline; equal deadlines keep request order.
    pub pending_captures: Vec<PendingCapture>,
    pub presence: bool,
    pub next_cadence_at: Option<Timestamp>,
}

impl PolicyState {
    /// State of a freshly started hub at `start`.
    pub fn initial(cfg: &PolicyConfig, start: Timestamp) -> Self {
        PolicyState {
            switch_on: true,
            disable_until: None,
            postpone_until: None,
            extend_until: None,
            pending_captures: Vec::new(),
            presence: false,
            next_cadence_at: (cfg.base_mode == BaseMode::Timelapse && cfg.cadence_ms > 0)
                .then(|| start.plus(cfg.cadence_ms)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationKind {
    Analog,
    Digital,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCalibration")]
pub struct Calibration {
    pub channel: String,
    pub kind: CalibrationKind,
    pub min: f64,
    pub max: f64,
    pub threshold: f64,
    pub degenerate: bool,
}

#[derive(Deserialize)]
struct RawCalibration {
    channel: String,
    kind: CalibrationKind,
    #[serde(default)]
    min: f64,
    #[serde(default = "one")]
    max: f64,
    #[serde(default)]
    threshold: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawCalibration> for Calibration {
    type Error = ModelError;

    fn try_from(raw: RawCalibration) -> Result<Self, Self::Error> {
        match raw.kind {
            CalibrationKind::Analog => Calibration::analog(raw.channel, raw.min, raw.max),
            CalibrationKind::Digital => Calibration::digital(raw.channel, raw.threshold),
        }
    }
}

impl Calibration {
    pub fn analog(channel: impl Into<String>, min: f64, max: f64) -> Result<Self, ModelError> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(ModelError::Invalid("calibration bounds must be finite".into()));
        }
        if min > max {
            return Err(ModelError::Invalid(format!("calibration min {min} exceeds max {max}")));
        }
        Ok(Calibration {
            channel: channel.into(),
            kind: CalibrationKind::Analog,
            min,
            max,
            threshold: 0.0,
            degenerate: min == max,
        })
    }

    pub fn digital(channel: impl Into<String>, threshold: f64) -> Result<Self, ModelError> {
        if !threshold.is_finite() {
            return Err(ModelError::Invalid("calibration threshold must be finite".into()));
        }
        Ok(Calibration {
            channel: channel.into(),
            kind: CalibrationKind::Digital,
            min: 0.0,
            max: 1.0,
            threshold,
            degenerate: false,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginSemantic {
    Available,
    Unavailable,
    Postponed,
    Posed,
    Manual,
    DeletedByParticipant,
    RejectedByPerspective,
}

impl OriginSemantic {
    pub fn as_str(self) -> &'static str {
        match self {
            OriginSemantic::Available => "available",
            OriginSemantic::Unavailable => "unavailable",
            OriginSemantic::Postponed => "postponed",
            OriginSemantic::Posed => "posed",
            OriginSemantic::Manual => "manual",
            OriginSemantic::DeletedByParticipant => "deleted_by_participant",
            OriginSemantic::RejectedByPerspective => "rejected_by_perspective",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Photo,
    Reading,
    Notice,
    Interval,
    Annotation,
}

impl EntryKind {
    pub const ALL: [EntryKind; 5] =
        [EntryKind::Photo, EntryKind::Reading, EntryKind::Notice, EntryKind::Interval, EntryKind::Annotation];

    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Photo => "photo",
            EntryKind::Reading => "reading",
            EntryKind::Notice => "notice",
            EntryKind::Interval => "interval",
            EntryKind::Annotation => "annotation",
        }
    }
}

impl FromStr for EntryKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| ModelError::Invalid(format!("unknown entry kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoticeKind {
    SensingNotice,
    CaptureNotice,
    DisabledNotice,
}

impl NoticeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoticeKind::SensingNotice => "sensing_notice",
            NoticeKind::CaptureNotice => "capture_notice",
            NoticeKind::DisabledNotice => "disabled_notice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalCause {
    Disable,
    Switch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalEdge {
    Open,
    Close,
}

/// Suppression reasons that leave a trace on the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionCause {
    SwitchedOff,
    DisabledWindow,
    Postponed,
}

/// Kind-specific metadata of a timeline entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EntryDetail {
    Photo { tags: TagSet, source: CaptureSource },
    Reading { channel: String, value: f64, normalized: Option<f64>, unit: String },
    Notice { notice: NoticeKind },
    Interval { cause: IntervalCause, edge: IntervalEdge },
    Suppression { source: CaptureSource, cause: SuppressionCause },
    Action { action: ActionKind, actor: String },
    Annotation { target: u64, actor: String, text: String },
    ConfigChange { actor: String },
}

impl EntryDetail {
    pub fn kind(&self) -> EntryKind {
        match self {
            EntryDetail::Photo { .. } => EntryKind::Photo,
            EntryDetail::Reading { .. } => EntryKind::Reading,
            EntryDetail::Notice { .. } => EntryKind::Notice,
            EntryDetail::Interval { .. } | EntryDetail::Suppression { .. } => EntryKind::Interval,
            EntryDetail::Action { .. } | EntryDetail::Annotation { .. } | EntryDetail::ConfigChange { .. } => {
                EntryKind::Annotation
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Redaction {
    pub actor: String,
    pub ts: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub seq: u64,
    pub ts: Timestamp,
    pub kind: EntryKind,
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic: Option<OriginSemantic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<PayloadRef>,
    #[serde(default)]
    pub redacted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redaction: Option<Redaction>,
    pub detail: EntryDetail,
}

impl TimelineEntry {
    /// Checks the structural invariants of a single entry.
    pub fn check(&self) -> Result<(), ModelError> {
        if self.seq == 0 {
            return Err(ModelError::Invalid("entry seq must be positive".into()));
        }
        if self.kind != self.detail.kind() {
            return Err(ModelError::Invalid(format!("entry {} kind does not match its detail", self.seq)));
        }
        if self.redacted != self.redaction.is_some() {
            return Err(ModelError::Invalid(format!("entry {} redaction marker inconsistent", self.seq)));
        }
        if self.redacted && self.payload_ref.is_some() {
            return Err(ModelError::Invalid(format!("redacted entry {} still references a payload", self.seq)));
        }
        if matches!(self.kind, EntryKind::Photo) && self.semantic.is_none() {
            return Err(ModelError::Invalid(format!("photo entry {} lacks a semantic", self.seq)));
        }
        Ok(())
    }

    pub fn notice(&self) -> Option<NotificationEvent> {
        match self.detail {
            EntryDetail::Notice { notice } => Some(NotificationEvent { kind: notice, ts: self.ts, seq: self.seq }),
            _ => None,
        }
    }

    pub fn has_payload(&self) -> bool {
        self.payload_ref.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NotificationEvent {
    pub kind: NoticeKind,
    pub ts: Timestamp,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    /// Sequence number of the annotation's own timeline entry.
    pub id: u64,
    pub entry_seq: u64,
    pub actor: String,
    pub ts: Timestamp,
    pub text: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibrations() -> Calibrations {
        Calibrations::new()
    }

    #[test]
    fn zero_cadence_timelapse_is_rejected() {
        let cfg = PolicyConfig { base_mode: BaseMode::Timelapse, cadence_ms: 0, ..Default::default() };
        let violations = validate_config(&cfg, &calibrations()).unwrap_err();
        assert_eq!(violations, vec![Violation::new("cadence must be positive")]);
    }

    #[test]
    fn armed_disable_with_window_is_ok() {
        let mut cfg = PolicyConfig::default();
        cfg.enabled_controls.insert(Control::Disable);
        cfg.disable_window_ms = 300_000;
        assert_eq!(validate_config(&cfg, &calibrations()), Ok(()));
    }

    #[test]
    fn degenerate_calibration_on_predicate_channel() {
        let cfg = PolicyConfig {
            base_mode: BaseMode::Reactive,
            reactive_predicate: Some(ReactivePredicate {
                channel: "couch".into(),
                threshold: 0.5,
                direction: Direction::Rising,
            }),
            ..Default::default()
        };
        let mut cals = calibrations();
        cals.insert("couch".into(), Calibration::analog("couch", 5.0, 5.0).unwrap());
        let violations = validate_config(&cfg, &cals).unwrap_err();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].0.contains("degenerate calibration"));
    }

    #[test]
    fn every_violation_is_reported() {
        let mut cfg = PolicyConfig {
            base_mode: BaseMode::Reactive,
            cadence_ms: 0,
            disable_window_ms: 0,
            capture_after_delay_ms: 0,
            ..Default::default()
        };
        cfg.enabled_controls.extend([Control::Disable, Control::CaptureAfter, Control::Extend]);
        let violations = validate_config(&cfg, &calibrations()).unwrap_err();
        assert_eq!(violations.len(), 4, "{violations:?}");
    }

    #[test]
    fn unarmed_timers_are_not_checked() {
        let cfg = PolicyConfig { postpone_delay_ms: 0, ..Default::default() };
        assert!(validate_config(&cfg, &calibrations()).is_ok());
    }

    #[test]
    fn tag_sets_are_closed_and_non_empty() {
        assert!("pet".parse::<TagSet>().is_err());
        assert!("".parse::<TagSet>().is_err());
        let set: TagSet = "object,face".parse().unwrap();
        assert!(set.object && set.face && !set.body);
        assert_eq!(serde_json::to_string(&set).unwrap(), r#"["object","face"]"#);
        assert!(serde_json::from_str::<TagSet>("[]").is_err());
        for bits in 1..8 {
            assert_eq!(TagSet::from_bits(bits).unwrap().bits(), bits);
        }
    }

    #[test]
    fn non_finite_readings_are_rejected() {
        assert!(SensorReading::new("n", "c", Timestamp(1), f64::NAN, "").is_err());
        let err = serde_json::from_str::<SensorReading>(r#"{"node":"n","channel":"","ts":1,"value":1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn calibration_invariants() {
        assert!(Calibration::analog("c", 2.0, 1.0).is_err());
        assert!(Calibration::analog("c", 1.0, 1.0).unwrap().degenerate);
        assert!(!Calibration::analog("c", 0.0, 1.0).unwrap().degenerate);
        let parsed: Calibration = serde_json::from_str(r#"{"channel":"c","kind":"analog","min":3,"max":3}"#).unwrap();
        assert!(parsed.degenerate);
    }

    #[test]
    fn node_ids_are_unique() {
        let node = NodeDescriptor {
            id: "cam".into(),
            kind: NodeKind::Camera,
            channel: "frames".into(),
            location: "kitchen".into(),
            form_label: FormLabel::Estranged,
        };
        assert!(validate_nodes(std::slice::from_ref(&node)).is_ok());
        assert_eq!(validate_nodes(&[node.clone(), node]).unwrap_err().len(), 1);
    }

    #[test]
    fn manual_and_annotate_are_always_accepted() {
        let cfg = PolicyConfig::default();
        assert!(cfg.accepts(ActionKind::ManualCapture));
        assert!(cfg.accepts(ActionKind::Annotate));
        assert!(!cfg.accepts(ActionKind::Disable));
        assert!(!cfg.accepts(ActionKind::Redact));
    }

    #[test]
    fn entry_kind_follows_detail() {
        let entry = TimelineEntry {
            seq: 1,
            ts: Timestamp(5),
            kind: EntryKind::Photo,
            node: "cam".into(),
            semantic: None,
            payload_ref: None,
            redacted: false,
            redaction: None,
            detail: EntryDetail::Photo { tags: "object".parse().unwrap(), source: CaptureSource::Manual },
        };
        assert!(entry.check().is_err(), "photo without semantic");
        let ok = TimelineEntry { semantic: Some(OriginSemantic::Manual), ..entry.clone() };
        assert!(ok.check().is_ok());
        let wrong = TimelineEntry { kind: EntryKind::Reading, ..ok };
        assert!(wrong.check().is_err());
    }
}
