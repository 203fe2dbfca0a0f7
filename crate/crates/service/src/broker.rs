//! Newline-delimited JSON publish/subscribe over TCP.
//!
//! One router holds every subscription; publishing takes its lock, so
//! delivery on a channel follows publish order. Each connection owns a
//! bounded outbound queue and is dropped from a channel when that queue
//! overflows. Nothing is retained for later subscribers.

use std::collections::HashMap;
use std::net::{IpAddr, SocketAddr};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use futures::StreamExt;
use hub_core::net::peer_allowed;
use hub_core::wire::{check_channel, WireMessage, WireOp, MAX_FRAME_BYTES};
use tokio::io::AsyncWriteExt;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_util::bytes::BytesMut;
use tokio_util::codec::{Decoder, FramedRead, LinesCodec, LinesCodecError};
use tracing::{debug, warn};

const CONNECTION_QUEUE: usize = 4096;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BrokerError {
    #[error("{0}")]
    Invalid(String),
    #[error("message of {0} bytes exceeds the 64 KiB limit")]
    Oversized(usize),
}

enum Outbound {
    Bounded(mpsc::Sender<Arc<WireMessage>>),
    Unbounded(mpsc::UnboundedSender<Arc<WireMessage>>),
}

struct Subscriber {
    id: u64,
    out: Outbound,
}

#[derive(Default)]
struct Router {
    channels: HashMap<String, Vec<Subscriber>>,
}

#[derive(Clone, Default)]
pub struct Broker {
    router: Arc<Mutex<Router>>,
    next_id: Arc<AtomicU64>,
}

impl Broker {
    pub fn new() -> Self {
        Broker::default()
    }

    fn id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed) + 1
    }

    /// Delivers `msg` to every current subscriber of its channel and
    /// returns how many received it.
    pub fn publish(&self, msg: WireMessage) -> Result<usize, BrokerError> {
        msg.validate().map_err(BrokerError::Invalid)?;
        let len = msg.to_op().to_line().len();
        if len > MAX_FRAME_BYTES {
            return Err(BrokerError::Oversized(len));
        }
        let msg = Arc::new(msg);
        let mut router = self.router.lock().expect("router lock");
        let Some(subs) = router.channels.get_mut(&msg.channel) else { return Ok(0) };
        let mut delivered = 0;
        subs.retain(|sub| {
            let ok = match &sub.out {
                Outbound::Bounded(tx) => tx.try_send(msg.clone()).is_ok(),
                Outbound::Unbounded(tx) => tx.send(msg.clone()).is_ok(),
            };
            if ok {
                delivered += 1;
            } else {
                debug!(subscriber = sub.id, channel = %msg.channel, "dropping subscriber");
            }
            ok
        });
        Ok(delivered)
    }

    fn subscribe(&self, id: u64, channel: &str, out: Outbound) {
        let mut router = self.router.lock().expect("router lock");
        let subs = router.channels.entry(channel.to_string()).or_default();
        if !subs.iter().any(|s| s.id == id) {
            subs.push(Subscriber { id, out });
        }
    }

    fn forget(&self, id: u64) {
        let mut router = self.router.lock().expect("router lock");
        for subs in router.channels.values_mut() {
            subs.retain(|s| s.id != id);
        }
    }

    /// An in-process subscriber that never drops messages. All channels
    /// share one queue, so a publisher's order is kept across channels.
    pub fn subscribe_local(&self, channels: &[&str]) -> mpsc::UnboundedReceiver<Arc<WireMessage>> {
        let id = self.id();
        let (tx, rx) = mpsc::unbounded_channel();
        for ch in channels {
            self.subscribe(id, ch, Outbound::Unbounded(tx.clone()));
        }
        rx
    }

    pub fn subscriber_count(&self, channel: &str) -> usize {
        self.router.lock().expect("router lock").channels.get(channel).map_or(0, Vec::len)
    }

    /// Accepts connections until the listener fails. Peers outside the
    /// local network are disconnected immediately.
    pub async fn serve(self, listener: TcpListener, allowlist: Vec<IpAddr>) {
        let bound = listener.local_addr().map(|a| a.ip()).unwrap_or(IpAddr::from([127, 0, 0, 1]));
        loop {
            let (stream, peer) = match listener.accept().await {
                Ok(c) => c,
                Err(e) => {
                    warn!("broker accept failed: {e}");
                    continue;
                }
            };
            if !peer_allowed(peer.ip(), bound, &allowlist) {
                warn!(%peer, "refusing non-local broker client");
                continue;
            }
            let broker = self.clone();
            tokio::spawn(async move { broker.connection(stream, peer).await });
        }
    }

    async fn connection(self, stream: TcpStream, peer: SocketAddr) {
        let id = self.id();
        let (read, mut write) = stream.into_split();
        let (msg_tx, mut msg_rx) = mpsc::channel::<Arc<WireMessage>>(CONNECTION_QUEUE);
        let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<WireOp>();

        let writer = tokio::spawn(async move {
            loop {
                let line = tokio::select! {
                    biased;
                    Some(op) = reply_rx.recv() => op.to_line(),
                    Some(msg) = msg_rx.recv() => msg.to_op().to_line(),
                    else => break,
                };
                if write.write_all(format!("{line}\n").as_bytes()).await.is_err() {
                    break;
                }
            }
        });

        let mut lines = FramedRead::new(read, Lines(LinesCodec::new_with_max_length(MAX_FRAME_BYTES)));
        let mut client: Option<String> = None;
        let reply = |op: WireOp| {
            let _ = reply_tx.send(op);
        };
        while let Some(line) = lines.next().await {
            let line = match line {
                Ok(Some(line)) => line,
                Ok(None) => {
                    reply(WireOp::Error { reason: "frame exceeds the 64 KiB limit".into() });
                    continue;
                }
                Err(_) => break,
            };
            if line.trim().is_empty() {
                continue;
            }
            let op: WireOp = match serde_json::from_str(&line) {
                Ok(op) => op,
                Err(e) => {
                    reply(WireOp::Error { reason: format!("malformed frame: {e}") });
                    continue;
                }
            };
            match (op, &client) {
                (WireOp::Hello { client: name }, _) => {
                    if name.is_empty() {
                        reply(WireOp::Error { reason: "client id must be non-empty".into() });
                    } else {
                        client = Some(name);
                        reply(WireOp::Welcome);
                    }
                }
                (_, None) => reply(WireOp::Error { reason: "say hello first".into() }),
                (WireOp::Subscribe { channel }, Some(_)) => match check_channel(&channel) {
                    Ok(()) => {
                        self.subscribe(id, &channel, Outbound::Bounded(msg_tx.clone()));
                        reply(WireOp::Subscribed { channel });
                    }
                    Err(reason) => reply(WireOp::Error { reason }),
                },
                (WireOp::Send { channel, ts, data }, Some(sender)) => {
                    if let Err(e) = self.publish(WireMessage { channel, sender: sender.clone(), ts, data }) {
                        reply(WireOp::Error { reason: e.to_string() });
                    }
                }
                (other, Some(_)) => reply(WireOp::Error { reason: format!("unexpected op {:?}", op_name(&other)) }),
            }
        }
        debug!(%peer, "broker client left");
        self.forget(id);
        drop(reply_tx);
        drop(msg_tx);
        let _ = writer.await;
    }
}

/// Line codec that reports an oversized line as `None` instead of failing
/// the stream, so the connection survives it.
struct Lines(LinesCodec);

impl Decoder for Lines {
    type Item = Option<String>;
    type Error = LinesCodecError;

    fn decode(&mut self, buf: &mut BytesMut) -> Result<Option<Self::Item>, Self::Error> {
        match self.0.decode(buf) {
            Err(LinesCodecError::MaxLineLengthExceeded) => Ok(Some(None)),
            other => other.map(|line| line.map(Some)),
        }
    }

    fn decode_eof(&mut self, buf: &mut BytesMut) -> Result<Option<Self::Item>, Self::Error> {
        match self.0.decode_eof(buf) {
            Err(LinesCodecError::MaxLineLengthExceeded) => Ok(Some(None)),
            other => other.map(|line| line.map(Some)),
        }
    }
}

fn op_name(op: &WireOp) -> &'static str {
    match op {
        WireOp::Hello { .. } => "hello",
        WireOp::Welcome => "welcome",
        WireOp::Subscribe { .. } => "subscribe",
        WireOp::Subscribed { .. } => "subscribed",
        WireOp::Send { .. } => "send",
        WireOp::Message { .. } => "message",
        WireOp::Error { .. } => "error",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hub_core::model::Timestamp;
    use hub_core::wire::Data;

    fn msg(channel: &str, n: u64) -> WireMessage {
        let mut data = Data::new();
        data.insert("n".into(), n.into());
        WireMessage::new(channel, "tester", Timestamp(n), data)
    }

    #[tokio::test]
    async fn fan_out_and_no_retention() {
        let broker = Broker::new();
        assert_eq!(broker.publish(msg("photos", 0)).unwrap(), 0);
        let mut a = broker.subscribe_local(&["photos"]);
        let mut b = broker.subscribe_local(&["photos"]);
        assert_eq!(broker.publish(msg("photos", 1)).unwrap(), 2);
        assert_eq!(a.recv().await.unwrap().ts, Timestamp(1));
        assert_eq!(b.recv().await.unwrap().ts, Timestamp(1));
        assert!(a.try_recv().is_err());
    }

    #[tokio::test]
    async fn local_queue_keeps_cross_channel_order() {
        let broker = Broker::new();
        let mut rx = broker.subscribe_local(&["a", "b"]);
        for n in 0..100 {
            broker.publish(msg(if n % 3 == 0 { "a" } else { "b" }, n)).unwrap();
        }
        for n in 0..100 {
            assert_eq!(rx.recv().await.unwrap().ts, Timestamp(n));
        }
    }

    #[test]
    fn oversized_and_malformed_are_rejected() {
        let broker = Broker::new();
        let mut data = Data::new();
        data.insert("blob".into(), "x".repeat(MAX_FRAME_BYTES).into());
        assert!(matches!(
            broker.publish(WireMessage::new("big", "t", Timestamp(0), data)),
            Err(BrokerError::Oversized(_))
        ));
        assert!(matches!(broker.publish(msg("bad channel", 0)), Err(BrokerError::Invalid(_))));
    }
}
