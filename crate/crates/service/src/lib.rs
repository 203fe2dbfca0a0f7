//! Serving side of the hub: the message broker, the HTTP/WebSocket API and
//! the runtime that wires both to the engine.

pub mod api;
pub mod broker;
pub mod runtime;

pub use broker::Broker;
pub use runtime::{start, Running, ServeError, Shared};
