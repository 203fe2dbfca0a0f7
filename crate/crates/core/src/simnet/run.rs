//! Plays a scenario into a hub.

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{HubError, StoreError};
use crate::hub::{Hub, HubStats};
use crate::model::{Calibrations, Frame, ParticipantAction, PolicyConfig, SensorReading, Timestamp};
use crate::simnet::scenario::{EventKind, Scenario, ScenarioEvent};
use crate::store::Store;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speed {
    /// Jump the logical clock from one instant to the next.
    #[default]
    Instant,
    /// One logical millisecond per wall-clock millisecond.
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub digest: String,
    pub stats: HubStats,
}

/// Runs `scenario` against a fresh in-memory hub.
pub fn run(scenario: &Scenario, cfg: &PolicyConfig, speed: Speed) -> Result<RunReport, HubError> {
    let hub = run_into(scenario, cfg, &Calibrations::new(), Store::in_memory(), speed)?;
    Ok(report(&hub))
}

pub fn report(hub: &Hub) -> RunReport {
    RunReport { digest: hub.store().digest(), stats: hub.stats() }
}

/// Runs `scenario` into `store` and hands back the hub for inspection.
pub fn run_into(
    scenario: &Scenario,
    cfg: &PolicyConfig,
    calibrations: &Calibrations,
    store: Store,
    speed: Speed,
) -> Result<Hub, HubError> {
    let mut hub = Hub::new(cfg.clone(), calibrations.clone(), store, scenario.seed)?;
    let started = Instant::now();
    let wait_until = |t: Timestamp| {
        if speed == Speed::Realtime {
            let target = started + Duration::from_millis(t.0);
            if let Some(left) = target.checked_duration_since(Instant::now()) {
                thread::sleep(left);
            }
        }
    };
    let step = |hub: &mut Hub, t: Timestamp| -> Result<(), HubError> {
        while let Some(deadline) = hub.next_deadline().filter(|d| *d < t) {
            wait_until(deadline);
            hub.advance(deadline)?;
        }
        wait_until(t);
        hub.advance(t)
    };
    for event in scenario.ordered() {
        step(&mut hub, event.t)?;
        inject(&mut hub, event)?;
    }
    step(&mut hub, scenario.end_time())?;
    Ok(hub)
}

/// Feeds one event to the hub. Refused actions are counted by the hub and
/// otherwise ignored, as they would be on a live deployment.
pub fn inject(hub: &mut Hub, event: &ScenarioEvent) -> Result<(), HubError> {
    match &event.kind {
        EventKind::Reading { channel, value, unit } => {
            let reading = SensorReading::new(event.node.clone(), channel.clone(), event.t, *value, unit.clone())
                .map_err(|e| HubError::NoTarget(e.to_string()))?;
            hub.ingest_reading(&reading)?;
        }
        EventKind::FrameOffer { tags } => {
            hub.offer_frame(&Frame { node: event.node.clone(), ts: event.t, tags: *tags, payload_ref: None })?;
        }
        EventKind::Action { actor, .. } => {
            let action = event.action().expect("action event").map_err(HubError::NoTarget)?;
            let action = ParticipantAction { actor: actor.clone(), ts: event.t, action };
            match hub.apply_action(&event.node, &action) {
                Ok(_)
                | Err(HubError::NotArmed)
                | Err(HubError::NoTarget(_))
                | Err(HubError::Store(
                    StoreError::NotFound(_) | StoreError::NotRedactable { .. } | StoreError::EmptyAnnotation,
                )) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BaseMode, Control};
    use crate::simnet::oracle::{oracle, Outcome};
    use crate::store::EMPTY_DIGEST;

    #[test]
    fn empty_scenario_gives_empty_digest() {
        let report = run(&Scenario::default(), &PolicyConfig::default(), Speed::Instant).unwrap();
        assert_eq!(report.digest, EMPTY_DIGEST);
    }

    #[test]
    fn disable_window_covering_second_offer() {
        let mut cfg = PolicyConfig { cadence_ms: 60_000, disable_window_ms: 30_000, ..Default::default() };
        cfg.enabled_controls.insert(Control::Disable);
        let s = Scenario::parse(
            r#"# {"end":180000}
{"t":59000,"node":"cam","kind":"frame_offer","tags":["object"]}
{"t":100000,"node":"p","kind":"action","action":"disable","actor":"a"}
{"t":119000,"node":"cam","kind":"frame_offer","tags":["object"]}
{"t":179000,"node":"cam","kind":"frame_offer","tags":["object"]}
"#,
        )
        .unwrap();
        let hub = run_into(&s, &cfg, &Calibrations::new(), Store::in_memory(), Speed::Instant).unwrap();
        let got = Outcome::from_entries(hub.store().entries());
        let ts: Vec<u64> = got.photos.iter().map(|p| p.ts).collect();
        assert_eq!(ts, [60_000, 180_000]);
        assert_eq!(got, oracle(&s, &cfg));
    }

    #[test]
    fn realtime_matches_instant() {
        let cfg = PolicyConfig { base_mode: BaseMode::Timelapse, cadence_ms: 40, ..Default::default() };
        let s = Scenario::parse(
            r#"# {"end":150}
{"t":10,"node":"cam","kind":"frame_offer","tags":["object"]}
{"t":95,"node":"p","kind":"action","action":"manual_capture","actor":"a"}
"#,
        )
        .unwrap();
        let a = run(&s, &cfg, Speed::Instant).unwrap();
        let b = run(&s, &cfg, Speed::Realtime).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.stats.photos_stored, 4);
    }
}
