//! Seeded random scenarios and configs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    ActionKind, BaseMode, Calibration, Calibrations, Control, Direction, LatestTarget, Perspective, PolicyConfig,
    ReactivePredicate, TagSet, Target, Timestamp,
};
use crate::simnet::scenario::{EventKind, Scenario, ScenarioEvent};

/// Mean events per second, per event family. Non-positive rates produce no
/// events of that family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub readings_per_s: f64,
    pub frames_per_s: f64,
    pub actions_per_s: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates { readings_per_s: 0.5, frames_per_s: 0.2, actions_per_s: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub duration_ms: u64,
    pub nodes: usize,
    pub rates: Rates,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { duration_ms: 600_000, nodes: 4, rates: Rates::default() }
    }
}

/// Channels the generator's sensors report on. `lux` is analog, the rest
/// are on/off.
pub const CHANNELS: [&str; 4] = ["couch", "tv", "door", "lux"];
pub const LUX_MAX: f64 = 1000.0;

const ACTIONS: [ActionKind; 7] = [
    ActionKind::Disable,
    ActionKind::Postpone,
    ActionKind::ToggleSwitch,
    ActionKind::Extend,
    ActionKind::CaptureAfter,
    ActionKind::ManualCapture,
    ActionKind::Redact,
];

/// Node `i` is a camera when `i % 3 == 0`, otherwise a sensor.
pub fn node_name(i: usize) -> String {
    if i.is_multiple_of(3) {
        format!("cam{i}")
    } else {
        format!("sensor{i}")
    }
}

fn arrivals(rng: &mut ChaCha8Rng, rate_per_s: f64, duration_ms: u64) -> Vec<u64> {
    let mut out = Vec::new();
    if !(rate_per_s > 0.0) || duration_ms == 0 {
        return out;
    }
    let mean = 1000.0 / rate_per_s;
    let mut t = mean * rng.random_range(0.0..1.0);
    while t < duration_ms as f64 {
        out.push(t as u64);
        t += mean * rng.random_range(0.5..1.5);
    }
    out
}

pub fn gen_random(seed: u64, params: &GenParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<String> = (0..params.nodes.max(1)).map(node_name).collect();
    let cameras: Vec<&String> = nodes.iter().enumerate().filter(|(i, _)| i % 3 == 0).map(|(_, n)| n).collect();
    let sensors: Vec<(usize, &String)> = nodes.iter().enumerate().filter(|(i, _)| i % 3 != 0).collect();
    let mut events: Vec<(u64, u8, ScenarioEvent)> = Vec::new();

    let d = params.duration_ms;
    for t in arrivals(&mut rng, params.rates.readings_per_s, d) {
        let (node, channel) = match sensors.choose(&mut rng) {
            Some((i, n)) => ((*n).clone(), CHANNELS[i % CHANNELS.len()]),
            None => (nodes[0].clone(), CHANNELS[0]),
        };
        let value = if channel == "lux" {
            (rng.random_range(0.0..LUX_MAX) * 10.0).round() / 10.0
        } else {
            f64::from(u8::from(rng.random_bool(0.5)))
        };
        let kind = EventKind::Reading { channel: channel.into(), value, unit: String::new() };
        events.push((t, 0, ScenarioEvent { t: Timestamp(t), node, kind }));
    }
    for t in arrivals(&mut rng, params.rates.frames_per_s, d) {
        let node = (*cameras.choose(&mut rng).expect("node 0 is a camera")).clone();
        let tags = TagSet::from_bits(rng.random_range(1..=7)).expect("non-empty");
        events.push((t, 1, ScenarioEvent { t: Timestamp(t), node, kind: EventKind::FrameOffer { tags } }));
    }
    for t in arrivals(&mut rng, params.rates.actions_per_s, d) {
        let node = nodes.choose(&mut rng).expect("at least one node").clone();
        let action = *ACTIONS.choose(&mut rng).expect("non-empty");
        let target = (action == ActionKind::Redact).then_some(Target::Latest(LatestTarget::LastPhoto));
        let actor = format!("p{}", rng.random_range(0..3));
        let kind = EventKind::Action { action, actor, target, text: None };
        events.push((t, 2, ScenarioEvent { t: Timestamp(t), node, kind }));
    }
    events.sort_by_key(|(t, family, _)| (*t, *family));
    Scenario {
        name: format!("random-{seed}"),
        seed,
        end: (d > 0).then_some(Timestamp(d)),
        events: events.into_iter().map(|(_, _, e)| e).collect(),
    }
}

/// A valid random policy config (and the calibrations it relies on).
pub fn gen_config(seed: u64) -> (PolicyConfig, Calibrations) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0f1);
    let base_mode = *[BaseMode::Timelapse, BaseMode::Reactive, BaseMode::Manual].choose(&mut rng).unwrap();
    let mut calibrations = Calibrations::new();
    let reactive_predicate = if base_mode == BaseMode::Reactive || rng.random_bool(0.5) {
        if rng.random_bool(0.5) {
            calibrations.insert("lux".into(), Calibration::analog("lux", 0.0, LUX_MAX).expect("valid bounds"));
            let direction = if rng.random_bool(0.5) { Direction::Rising } else { Direction::Falling };
            Some(ReactivePredicate { channel: "lux".into(), threshold: rng.random_range(0.2..0.8), direction })
        } else {
            let channel = *CHANNELS[..3].choose(&mut rng).unwrap();
            Some(ReactivePredicate { channel: channel.into(), threshold: 0.5, direction: Direction::Rising })
        }
    } else {
        None
    };
    let enabled_controls = Control::ALL.into_iter().filter(|_| rng.random_bool(0.6)).collect();
    let perspective =
        *[Perspective::ObjectOnly, Perspective::InteractionDriven, Perspective::ActivityDriven].choose(&mut rng).unwrap();
    let secs = |rng: &mut ChaCha8Rng, lo: u64, hi: u64| rng.random_range(lo..=hi) * 1000;
    let cfg = PolicyConfig {
        base_mode,
        cadence_ms: secs(&mut rng, 5, 60),
        reactive_predicate,
        enabled_controls,
        disable_window_ms: secs(&mut rng, 10, 180),
        postpone_delay_ms: secs(&mut rng, 10, 120),
        extend_window_ms: secs(&mut rng, 10, 120),
        capture_after_delay_ms: secs(&mut rng, 1, 30),
        perspective,
        disable_suppresses_readings: rng.random_bool(0.2),
    };
    (cfg, calibrations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_config;

    #[test]
    fn same_seed_same_scenario() {
        let p = GenParams::default();
        assert_eq!(gen_random(42, &p), gen_random(42, &p));
        assert_ne!(gen_random(42, &p), gen_random(43, &p));
    }

    #[test]
    fn zero_duration_is_empty() {
        let s = gen_random(1, &GenParams { duration_ms: 0, ..Default::default() });
        assert!(s.events.is_empty());
    }

    #[test]
    fn event_count_tracks_rate() {
        let rates = Rates { readings_per_s: 1.0, frames_per_s: 0.0, actions_per_s: 0.0 };
        for seed in 0..50 {
            let s = gen_random(seed, &GenParams { duration_ms: 600_000, nodes: 3, rates });
            assert!((540..=660).contains(&s.events.len()), "seed {seed}: {}", s.events.len());
        }
    }

    #[test]
    fn generated_scenarios_are_sorted_and_reparse() {
        let s = gen_random(7, &GenParams::default());
        assert!(s.events.windows(2).all(|w| w[0].t <= w[1].t));
        assert_eq!(Scenario::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn generated_configs_are_valid() {
        for seed in 0..200 {
            let (cfg, cals) = gen_config(seed);
            assert!(validate_config(&cfg, &cals).is_ok(), "seed {seed}");
        }
    }
}
