//! The serving hub: one engine behind a lock, fed by the broker and the
//! HTTP API, with every change fanned out to live clients and the broker.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use hub_core::config::{ClockMode, HubConfig};
use hub_core::error::{HubError, NetError, StoreError};
use hub_core::model::{EntryKind, Timestamp, Violation};
use hub_core::net::local_only_guard;
use hub_core::wire::{self, decode_input, Data, HubInput, LiveEvent, WireMessage};
use hub_core::{Durability, Hub, HubEvent, Store};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot, Notify};
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::api;
use crate::broker::Broker;

/// Live events buffered per WebSocket client before the oldest are dropped.
pub const LIVE_BUFFER: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("invalid configuration: {}", .0.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join("; "))]
    Config(Vec<Violation>),
    #[error(transparent)]
    Guard(#[from] NetError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Hub(#[from] HubError),
}

enum Clock {
    Wall { origin: Instant, offset: u64 },
    Driven,
}

pub struct Shared {
    hub: Mutex<Hub>,
    clock: Clock,
    live: broadcast::Sender<LiveEvent>,
    broker: Broker,
    wake: Notify,
    pub correlation_window_ms: u64,
}

impl Shared {
    pub fn new(hub: Hub, mode: ClockMode, broker: Broker, correlation_window_ms: u64) -> Arc<Shared> {
        let clock = match mode {
            ClockMode::Wall => Clock::Wall { origin: Instant::now(), offset: hub.clock().0 },
            ClockMode::Driven => Clock::Driven,
        };
        let (live, _) = broadcast::channel(LIVE_BUFFER);
        Arc::new(Shared { hub: Mutex::new(hub), clock, live, broker, wake: Notify::new(), correlation_window_ms })
    }

    fn now(&self, hub: &Hub) -> Timestamp {
        match self.clock {
            Clock::Wall { origin, offset } => Timestamp(offset + origin.elapsed().as_millis() as u64).max(hub.clock()),
            Clock::Driven => hub.clock(),
        }
    }

    pub fn is_driven(&self) -> bool {
        matches!(self.clock, Clock::Driven)
    }

    /// Runs one change against the hub at the current time and publishes
    /// whatever it produced before the lock is released.
    pub fn mutate<R>(&self, f: impl FnOnce(&mut Hub, Timestamp) -> Result<R, HubError>) -> Result<R, HubError> {
        let mut hub = self.hub.lock().expect("hub lock");
        let now = self.now(&hub);
        let result = hub.advance(now).and_then(|_| f(&mut hub, now));
        self.flush(&mut hub);
        drop(hub);
        self.wake.notify_one();
        result
    }

    pub fn read<R>(&self, f: impl FnOnce(&Hub) -> R) -> R {
        f(&self.hub.lock().expect("hub lock"))
    }

    pub fn subscribe_live(&self) -> broadcast::Receiver<LiveEvent> {
        self.live.subscribe()
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    fn flush(&self, hub: &mut Hub) {
        for event in hub.drain_events() {
            match event {
                HubEvent::Appended(entry) => {
                    if let Some(n) = entry.notice() {
                        let mut data = Data::new();
                        data.insert("kind".into(), n.kind.as_str().into());
                        data.insert("seq".into(), n.seq.into());
                        self.publish(WireMessage::new(wire::NOTICES, hub_core::hub::HUB_NODE, n.ts, data));
                        let _ = self.live.send(LiveEvent::Notice { kind: n.kind, ts: n.ts, seq: n.seq });
                        continue;
                    }
                    if entry.kind == EntryKind::Photo {
                        let data = wire::photo_data(&entry);
                        self.publish(WireMessage::new(wire::PHOTOS, hub_core::hub::HUB_NODE, entry.ts, data));
                    }
                    let _ = self.live.send(LiveEvent::Entry { entry });
                }
                HubEvent::Redacted(t) => {
                    let _ = self.live.send(LiveEvent::Redaction { seq: t.entry_seq, actor: t.actor, ts: t.ts });
                }
            }
        }
    }

    fn publish(&self, msg: WireMessage) {
        if let Err(e) = self.broker.publish(msg) {
            warn!("hub publish failed: {e}");
        }
    }

    /// Applies one broker message.
    pub fn handle(&self, msg: &WireMessage) -> Result<(), HubError> {
        let input = match decode_input(msg) {
            Ok(input) => input,
            Err(reason) => {
                warn!(channel = %msg.channel, sender = %msg.sender, "ignoring message: {reason}");
                return Ok(());
            }
        };
        let driven = self.is_driven();
        let sync = self.mutate(|hub, now| {
            let ts = if driven { msg.ts } else { now };
            match input {
                HubInput::Reading(mut r) => {
                    r.ts = ts;
                    hub.ingest_reading(&r)?;
                }
                HubInput::Frame(mut f) => {
                    f.ts = ts;
                    hub.offer_frame(&f)?;
                }
                HubInput::Action { node, mut action } => {
                    action.ts = ts;
                    match hub.apply_action(&node, &action) {
                        Ok(_) | Err(HubError::NotArmed) | Err(HubError::NoTarget(_)) => {}
                        Err(HubError::Store(StoreError::NotFound(_) | StoreError::NotRedactable { .. })) => {}
                        Err(e) => return Err(e),
                    }
                }
                HubInput::Clock { sync, .. } => {
                    hub.advance(ts)?;
                    if let Some(token) = sync {
                        let mut data = Data::new();
                        data.insert("sync".into(), token);
                        data.insert("digest".into(), hub.store().digest().into());
                        data.insert("entries".into(), hub.store().len().into());
                        return Ok(Some(WireMessage::new(wire::SYNC_REPLY, hub_core::hub::HUB_NODE, hub.clock(), data)));
                    }
                }
            }
            Ok(None)
        })?;
        if let Some(reply) = sync {
            self.publish(reply);
        }
        Ok(())
    }
}

/// Fires due timers on the wall clock.
async fn timer_loop(shared: Arc<Shared>) {
    loop {
        let wait = shared.read(|hub| hub.next_deadline().map(|d| d.0.saturating_sub(shared.now(hub).0)));
        match wait {
            Some(ms) => {
                tokio::select! {
                    _ = tokio::time::sleep(Duration::from_millis(ms)) => {}
                    _ = shared.wake.notified() => continue,
                }
            }
            None => {
                shared.wake.notified().await;
                continue;
            }
        }
        if let Err(e) = shared.mutate(|_, _| Ok(())) {
            warn!("timer tick failed: {e}");
        }
    }
}

async fn input_loop(shared: Arc<Shared>) {
    let mut rx = shared.broker.subscribe_local(&wire::HUB_INPUTS);
    while let Some(msg) = rx.recv().await {
        if let Err(e) = shared.handle(&msg) {
            warn!("hub input failed: {e}");
        }
    }
}

pub struct Running {
    pub api_addr: SocketAddr,
    pub broker_addr: SocketAddr,
    pub shared: Arc<Shared>,
    stop: Option<oneshot::Sender<()>>,
    tasks: Vec<JoinHandle<()>>,
}

impl Running {
    /// Stops serving and waits for the API to drain.
    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let mut tasks = std::mem::take(&mut self.tasks);
        if let Some(api) = tasks.pop() {
            let _ = tokio::time::timeout(Duration::from_secs(5), api).await;
        }
        for t in tasks {
            t.abort();
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

async fn bind(addr: SocketAddr) -> Result<TcpListener, ServeError> {
    TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })
}

/// Where the hub keeps its store, if anywhere.
pub fn open_store(dir: Option<&PathBuf>) -> Result<Store, StoreError> {
    match dir {
        Some(d) => Store::open(d, Durability::Sync),
        None => Ok(Store::in_memory()),
    }
}

/// Validates the config, checks both bind addresses, then starts the broker,
/// the hub input loop, the wall-clock timer and the HTTP API.
pub async fn start(cfg: HubConfig) -> Result<Running, ServeError> {
    cfg.validate().map_err(ServeError::Config)?;
    let api_addr = SocketAddr::new(cfg.bind, cfg.api_port);
    let broker_addr = SocketAddr::new(cfg.bind, cfg.broker_port);
    local_only_guard(&api_addr, &cfg.lan_allowlist)?;
    local_only_guard(&broker_addr, &cfg.lan_allowlist)?;

    let store = open_store(cfg.data_dir.as_ref())?;
    let hub = Hub::new(cfg.policy.clone(), cfg.calibration_map(), store, cfg.payload_seed)?;
    let broker = Broker::new();
    let shared = Shared::new(hub, cfg.clock, broker.clone(), cfg.correlation_window_ms);

    let broker_listener = bind(broker_addr).await?;
    let api_listener = bind(api_addr).await?;
    let broker_addr = broker_listener.local_addr().map_err(|source| ServeError::Bind { addr: broker_addr, source })?;
    let api_addr = api_listener.local_addr().map_err(|source| ServeError::Bind { addr: api_addr, source })?;

    let mut tasks = vec![
        tokio::spawn(broker.serve(broker_listener, cfg.lan_allowlist.clone())),
        tokio::spawn(input_loop(shared.clone())),
    ];
    if !shared.is_driven() {
        tasks.push(tokio::spawn(timer_loop(shared.clone())));
    }
    let (stop, stopped) = oneshot::channel::<()>();
    let app = api::router(shared.clone(), cfg.lan_allowlist.clone(), api_addr.ip());
    tasks.push(tokio::spawn(async move {
        let served = axum::serve(api_listener, app.into_make_service_with_connect_info::<SocketAddr>())
            .with_graceful_shutdown(async move {
                let _ = stopped.await;
            })
            .await;
        if let Err(e) = served {
            warn!("api server stopped: {e}");
        }
    }));
    info!(%api_addr, %broker_addr, "hub serving");
    Ok(Running { api_addr, broker_addr, shared, stop: Some(stop), tasks })
}
