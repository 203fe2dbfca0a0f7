use std::collections::BTreeSet;
use std::time::Duration;

use hub_client::{ApiClient, ClientError, LiveClient, NodeClient, TimelineFilter};
use hub_core::config::{ClockMode, HubConfig};
use hub_core::model::{
    BaseMode, Control, EntryKind, NoticeKind, OriginSemantic, PolicyConfig, SensorReading, Timestamp,
};
use hub_core::simnet::{gen_config, gen_random, run_into, GenParams, Rates, Speed};
use hub_core::wire::{self, Data, LiveEvent, WireOp};
use hub_core::Store;
use hub_service::Running;
use serde_json::json;

async fn serve(policy: PolicyConfig, clock: ClockMode) -> (Running, ApiClient) {
    let cfg = HubConfig { policy, api_port: 0, broker_port: 0, clock, ..HubConfig::default() };
    let running = hub_service::start(cfg).await.unwrap();
    let api = ApiClient::new(format!("http://{}", running.api_addr));
    (running, api)
}

fn manual_policy(controls: &[Control]) -> PolicyConfig {
    PolicyConfig { base_mode: BaseMode::Manual, enabled_controls: controls.iter().copied().collect(), ..Default::default() }
}

fn frame(tags: &str) -> Data {
    let mut d = Data::new();
    d.insert("tags".into(), tags.into());
    d
}

async fn next_live(live: &mut LiveClient) -> LiveEvent {
    tokio::time::timeout(Duration::from_secs(10), live.next()).await.expect("live event in time").unwrap().unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn api_answers_with_the_documented_statuses() {
    let (running, api) = serve(manual_policy(&[]), ClockMode::Driven).await;

    assert!(api.timeline(&TimelineFilter::default()).await.unwrap().is_empty());
    assert_eq!(api.payload(42).await.unwrap(), None);

    let err = api.control("disable", "p1").await.unwrap_err();
    assert_eq!(err.status().map(|s| s.as_u16()), Some(409));
    let ClientError::Status { body, .. } = err else { unreachable!() };
    assert_eq!(body, json!({ "error": "control not armed" }));

    let bad = PolicyConfig { base_mode: BaseMode::Timelapse, cadence_ms: 0, ..Default::default() };
    let err = api.put_modes(&bad).await.unwrap_err();
    let ClientError::Status { status: 400, body } = err else { panic!("{err:?}") };
    assert!(!body["violations"].as_array().unwrap().is_empty());

    let http = reqwest::Client::new();
    let base = api.base();
    let status = |r: reqwest::Response| r.status().as_u16();
    let r = http.put(format!("{base}/api/modes")).json(&json!({ "cadense_ms": 5 })).send().await.unwrap();
    assert_eq!(status(r), 400);
    let r = http.post(format!("{base}/api/control/manual")).body("{not json").send().await.unwrap();
    assert_eq!(status(r), 400);
    let r = http.post(format!("{base}/api/control/selfdestruct")).send().await.unwrap();
    assert_eq!(status(r), 404);
    let r = http.get(format!("{base}/api/timeline?kinds=photo,bogus")).send().await.unwrap();
    assert_eq!(status(r), 400);
    let r = http.delete(format!("{base}/api/entries/99")).send().await.unwrap();
    assert_eq!(status(r), 404);

    let armed = api.put_modes(&manual_policy(&[Control::Disable])).await.unwrap();
    assert!(armed.enabled_controls.contains(&Control::Disable));
    assert_eq!(api.modes().await.unwrap(), armed);
    let ack = api.control("disable", "p1").await.unwrap();
    let entry = api.timeline(&TimelineFilter::default()).await.unwrap().into_iter().find(|e| e.seq == ack.seq).unwrap();
    assert_eq!(entry.kind, EntryKind::Annotation);

    // every refused control is counted
    assert_eq!(api.stats().await.unwrap().rejections, 1);
    running.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn manual_capture_redaction_and_annotation_round_trip() {
    let (running, api) = serve(manual_policy(&[]), ClockMode::Driven).await;
    let mut cam = NodeClient::connect(running.broker_addr, "cam0").await.unwrap();
    cam.subscribe(wire::SYNC_REPLY).await.unwrap();
    cam.publish(wire::FRAMES, Timestamp(1_000), frame("object")).await.unwrap();
    cam.sync(Timestamp(1_000), 1).await.unwrap();

    let mut live = LiveClient::connect(api.base()).await.unwrap();
    api.control("manual", "p1").await.unwrap();

    let mut seen = Vec::new();
    let photo = loop {
        match next_live(&mut live).await {
            LiveEvent::Entry { entry } if entry.kind == EntryKind::Photo => break entry,
            other => seen.push(other),
        }
    };
    assert!(
        matches!(seen.last(), Some(LiveEvent::Notice { kind: NoticeKind::CaptureNotice, .. })),
        "capture notice must come right before the photo: {seen:?}"
    );
    assert_eq!(photo.semantic, Some(OriginSemantic::Manual));
    let bytes = api.payload(photo.seq).await.unwrap().expect("stored payload");
    assert!(!bytes.is_empty());

    let note = api.annotate(photo.seq, "p1", "kitchen").await.unwrap();
    assert_eq!(note.text, "kitchen");
    let tomb = api.redact(photo.seq, "p1").await.unwrap();
    assert_eq!(tomb.entry_seq, photo.seq);
    loop {
        if let LiveEvent::Redaction { seq, actor, .. } = next_live(&mut live).await {
            assert_eq!((seq, actor.as_str()), (photo.seq, "p1"));
            break;
        }
    }
    assert_eq!(api.payload(photo.seq).await.unwrap(), None);
    // a second delete is harmless
    api.redact(photo.seq, "p1").await.unwrap();
    let photos = api.timeline(&TimelineFilter { kinds: vec![EntryKind::Photo], ..Default::default() }).await.unwrap();
    assert!(photos.iter().all(|e| e.kind == EntryKind::Photo));
    assert!(photos.iter().find(|e| e.seq == photo.seq).unwrap().redacted);

    let zip = api.export().await.unwrap();
    assert!(!zip.windows(bytes.len()).any(|w| w == bytes.as_slice()));
    running.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn slow_live_clients_get_a_gap_marker() {
    let (running, api) = serve(manual_policy(&[]), ClockMode::Driven).await;
    let mut live = LiveClient::connect(api.base()).await.unwrap();
    running
        .shared
        .mutate(|hub, _| {
            for i in 0..(hub_service::runtime::LIVE_BUFFER as u64 * 4) {
                let r = SensorReading::new("sensor1", "lux", Timestamp(i), i as f64, "lx").unwrap();
                hub.ingest_reading(&r)?;
            }
            Ok(())
        })
        .unwrap();
    loop {
        if let LiveEvent::Gap { missed } = next_live(&mut live).await {
            assert!(missed > 0);
            break;
        }
    }
    running.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn broker_routes_in_order_and_subscriptions_are_idempotent() {
    let (running, _api) = serve(manual_policy(&[]), ClockMode::Driven).await;
    let mut rx = NodeClient::connect(running.broker_addr, "rx").await.unwrap();
    rx.subscribe("lab/test").await.unwrap();
    rx.subscribe("lab/test").await.unwrap();
    let mut tx = NodeClient::connect(running.broker_addr, "tx").await.unwrap();
    for i in 0..100u64 {
        let mut d = Data::new();
        d.insert("i".into(), i.into());
        tx.publish("lab/test", Timestamp(i), d).await.unwrap();
    }
    let mut got = Vec::new();
    while got.len() < 100 {
        match rx.recv().await.unwrap() {
            WireOp::Message { channel, sender, data, .. } => {
                assert_eq!((channel.as_str(), sender.as_str()), ("lab/test", "tx"));
                got.push(data["i"].as_u64().unwrap());
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    assert_eq!(got, (0..100).collect::<Vec<_>>());

    // nothing duplicated: a sentinel arrives next
    tx.publish("lab/test", Timestamp(500), Data::new()).await.unwrap();
    let WireOp::Message { ts, .. } = rx.recv().await.unwrap() else { panic!() };
    assert_eq!(ts, Timestamp(500));

    let mut big = Data::new();
    big.insert("blob".into(), "x".repeat(wire::MAX_FRAME_BYTES).into());
    tx.publish("lab/test", Timestamp(501), big).await.unwrap();
    assert!(matches!(tx.recv().await.unwrap(), WireOp::Error { .. }));
    tx.send_raw("{\"op\":\"send\"").await.unwrap();
    assert!(matches!(tx.recv().await.unwrap(), WireOp::Error { .. }));

    let mut stranger = NodeClient::connect(running.broker_addr, "x").await.unwrap();
    stranger.send_raw(r#"{"op":"subscribe","channel":"bad channel"}"#).await.unwrap();
    assert!(matches!(stranger.recv().await.unwrap(), WireOp::Error { .. }));
    running.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn hub_publishes_notices_and_photo_metadata() {
    let (running, api) = serve(manual_policy(&[]), ClockMode::Driven).await;
    let mut watcher = NodeClient::connect(running.broker_addr, "watch").await.unwrap();
    watcher.subscribe(wire::NOTICES).await.unwrap();
    watcher.subscribe(wire::PHOTOS).await.unwrap();
    let mut cam = NodeClient::connect(running.broker_addr, "cam0").await.unwrap();
    cam.subscribe(wire::SYNC_REPLY).await.unwrap();
    cam.publish(wire::FRAMES, Timestamp(5), frame("object,face")).await.unwrap();
    cam.sync(Timestamp(5), 7).await.unwrap();
    api.control("manual", "p1").await.unwrap();

    let mut order = Vec::new();
    while order.len() < 2 {
        if let WireOp::Message { channel, data, .. } = watcher.recv().await.unwrap() {
            order.push((channel, data));
        }
    }
    assert_eq!(order[0].0, wire::NOTICES);
    assert_eq!(order[0].1["kind"], "capture_notice");
    assert_eq!(order[1].0, wire::PHOTOS);
    // the default perspective refuses faces, so no payload was kept
    assert_eq!(order[1].1["semantic"], "rejected_by_perspective");
    let seq = order[1].1["seq"].as_u64().unwrap();
    assert_eq!(api.payload(seq).await.unwrap(), None);
    running.shutdown().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn broker_replay_matches_in_process_replay() {
    for seed in [4u64, 11, 23] {
        let params = GenParams {
            duration_ms: 120_000,
            nodes: 4,
            rates: Rates { readings_per_s: 1.0, frames_per_s: 0.3, actions_per_s: 0.1 },
        };
        let scenario = gen_random(seed, &params);
        let (policy, cals) = gen_config(seed);
        let local = run_into(&scenario, &policy, &cals, Store::in_memory(), Speed::Instant).unwrap();

        let cfg = HubConfig {
            policy,
            calibrations: cals.values().cloned().collect(),
            api_port: 0,
            broker_port: 0,
            clock: ClockMode::Driven,
            payload_seed: scenario.seed,
            ..HubConfig::default()
        };
        let running = hub_service::start(cfg).await.unwrap();
        let mut gateway = NodeClient::connect(running.broker_addr, "simnet").await.unwrap();
        let digest = gateway.play(&scenario).await.unwrap();
        assert_eq!(digest, local.store().digest(), "seed {seed}");
        let api = ApiClient::new(format!("http://{}", running.api_addr));
        assert_eq!(api.digest().await.unwrap().entries, local.store().len());
        let kinds: BTreeSet<_> = api.timeline(&TimelineFilter::default()).await.unwrap().iter().map(|e| e.kind).collect();
        assert!(kinds.contains(&EntryKind::Reading));
        running.shutdown().await;
    }
}
