//! Clients for a running hub: the HTTP API, the live event stream and the
//! message broker.

pub mod api;
pub mod live;
pub mod node;

pub use api::{ApiClient, ControlAck, DigestInfo, TimelineFilter};
pub use live::LiveClient;
pub use node::NodeClient;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("hub answered {status}: {body}")]
    Status { status: u16, body: serde_json::Value },
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("websocket: {0}")]
    Ws(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed frame: {0}")]
    Json(#[from] serde_json::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("connection closed")]
    Closed,
    #[error("timed out waiting for the hub")]
    Timeout,
}
