//! A broker client, as used by sensor, camera and control nodes.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::time::Duration;

use futures::StreamExt;
use hub_core::model::Timestamp;
use hub_core::simnet::Scenario;
use hub_core::wire::{self, Data, WireOp, MAX_FRAME_BYTES};
use serde_json::Value;
use tokio::io::AsyncWriteExt;
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio_util::codec::{FramedRead, LinesCodec};

use crate::ClientError;

const REPLY_TIMEOUT: Duration = Duration::from_secs(30);

pub struct NodeClient {
    lines: FramedRead<OwnedReadHalf, LinesCodec>,
    write: OwnedWriteHalf,
    /// Frames read while waiting for something else.
    backlog: VecDeque<WireOp>,
}

impl NodeClient {
    pub async fn connect(addr: SocketAddr, client_id: &str) -> Result<NodeClient, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        let (read, write) = stream.into_split();
        let mut node = NodeClient {
            lines: FramedRead::new(read, LinesCodec::new_with_max_length(MAX_FRAME_BYTES + 1024)),
            write,
            backlog: VecDeque::new(),
        };
        node.send_op(&WireOp::Hello { client: client_id.to_string() }).await?;
        node.wait_for(|op| matches!(op, WireOp::Welcome)).await?;
        Ok(node)
    }

    pub async fn send_op(&mut self, op: &WireOp) -> Result<(), ClientError> {
        self.send_raw(&op.to_line()).await
    }

    /// Writes one line verbatim; used to probe protocol handling.
    pub async fn send_raw(&mut self, line: &str) -> Result<(), ClientError> {
        self.write.write_all(format!("{line}\n").as_bytes()).await?;
        Ok(())
    }

    async fn read_op(&mut self) -> Result<WireOp, ClientError> {
        match tokio::time::timeout(REPLY_TIMEOUT, self.lines.next()).await {
            Err(_) => Err(ClientError::Timeout),
            Ok(None) => Err(ClientError::Closed),
            Ok(Some(line)) => {
                let line = line.map_err(|e| ClientError::Protocol(e.to_string()))?;
                Ok(serde_json::from_str(&line)?)
            }
        }
    }

    /// Reads until `want` matches, keeping everything else for `recv`.
    /// A broker error frame ends the wait.
    async fn wait_for(&mut self, want: impl Fn(&WireOp) -> bool) -> Result<WireOp, ClientError> {
        loop {
            let op = self.read_op().await?;
            if want(&op) {
                return Ok(op);
            }
            if let WireOp::Error { reason } = op {
                return Err(ClientError::Protocol(reason));
            }
            self.backlog.push_back(op);
        }
    }

    pub async fn subscribe(&mut self, channel: &str) -> Result<(), ClientError> {
        self.send_op(&WireOp::Subscribe { channel: channel.to_string() }).await?;
        let ch = channel.to_string();
        self.wait_for(move |op| matches!(op, WireOp::Subscribed { channel } if *channel == ch)).await?;
        Ok(())
    }

    pub async fn publish(&mut self, channel: &str, ts: Timestamp, data: Data) -> Result<(), ClientError> {
        self.send_op(&WireOp::Send { channel: channel.to_string(), ts, data }).await
    }

    /// Next frame from the broker (message or error).
    pub async fn recv(&mut self) -> Result<WireOp, ClientError> {
        match self.backlog.pop_front() {
            Some(op) => Ok(op),
            None => self.read_op().await,
        }
    }

    /// Sends a clock message carrying `token` and waits for the hub's
    /// acknowledgment. Returns the hub's digest at that point.
    pub async fn sync(&mut self, ts: Timestamp, token: u64) -> Result<String, ClientError> {
        let mut data = Data::new();
        data.insert("sync".into(), token.into());
        self.publish(wire::CLOCK, ts, data).await?;
        let ack = self
            .wait_for(|op| {
                matches!(op, WireOp::Message { channel, data, .. }
                    if channel == wire::SYNC_REPLY && data.get("sync") == Some(&Value::from(token)))
            })
            .await?;
        match ack {
            WireOp::Message { data, .. } => data
                .get("digest")
                .and_then(Value::as_str)
                .map(String::from)
                .ok_or_else(|| ClientError::Protocol("sync reply without digest".into())),
            _ => unreachable!("wait_for only returns matching frames"),
        }
    }

    /// Plays every scenario event through the broker on behalf of its node,
    /// then drives the clock to the scenario's end and returns the resulting
    /// store digest. One connection keeps the events in order.
    pub async fn play(&mut self, scenario: &Scenario) -> Result<String, ClientError> {
        self.subscribe(wire::SYNC_REPLY).await?;
        for event in scenario.ordered() {
            let (channel, data) = wire::encode_event(event);
            self.publish(channel, event.t, data).await?;
        }
        self.sync(scenario.end_time(), scenario.seed).await
    }
}
