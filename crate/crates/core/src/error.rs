use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::{EntryKind, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("entry {0} not found")]
    NotFound(u64),
    #[error("entry {seq} of kind {kind:?} is not redactable")]
    NotRedactable { seq: u64, kind: EntryKind },
    #[error("payload of entry {0} is not available")]
    PayloadUnavailable(u64),
    #[error("annotation text must be non-empty")]
    EmptyAnnotation,
    #[error("corrupt store at {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("invalid bundle: {0}")]
    Bundle(String),
    #[error("storage failure: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("cannot read scenario: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum HubError {
    #[error("control not armed")]
    NotArmed,
    #[error("invalid configuration: {}", join(.0))]
    InvalidConfig(Vec<Violation>),
    #[error("nothing to target: {0}")]
    NoTarget(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("refusing to bind {addr}: only loopback or allowlisted LAN addresses are permitted")]
    NonLocalBind { addr: String },
    #[error("refusing outbound connection to {addr}: the hub never dials out")]
    OutboundRefused { addr: String },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<Violation>),
}
