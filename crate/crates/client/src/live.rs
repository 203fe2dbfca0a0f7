//! Subscriber for the hub's live WebSocket.

use futures::StreamExt;
use hub_core::wire::LiveEvent;
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use crate::ClientError;

pub struct LiveClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl LiveClient {
    /// Connects to `<base>/api/live`, where `base` is an `http://` URL.
    pub async fn connect(base: &str) -> Result<LiveClient, ClientError> {
        let url = format!("{}/api/live", base.trim_end_matches('/').replacen("http://", "ws://", 1));
        let (ws, _) = tokio_tungstenite::connect_async(url).await?;
        Ok(LiveClient { ws })
    }

    /// Next event, or `None` once the hub closes the stream.
    pub async fn next(&mut self) -> Result<Option<LiveEvent>, ClientError> {
        while let Some(msg) = self.ws.next().await {
            match msg? {
                Message::Text(text) => return Ok(Some(serde_json::from_str(&text)?)),
                Message::Close(_) => return Ok(None),
                _ => continue,
            }
        }
        Ok(None)
    }
}
