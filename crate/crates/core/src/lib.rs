//! Core of a local-only data capture hub: domain model, capture policy,
//! notices, reading pipeline, timeline store and a scenario simulator.

pub mod config;
pub mod error;
pub mod hub;
pub mod model;
pub mod net;
pub mod notify;
pub mod pipeline;
pub mod policy;
pub mod simnet;
pub mod store;
pub mod wire;

pub use error::{ConfigError, HubError, ModelError, NetError, ScenarioError, StoreError};
pub use hub::{Hub, HubEvent, HubStats};
pub use store::{Durability, Store};
