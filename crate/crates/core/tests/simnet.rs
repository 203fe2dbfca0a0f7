use hub_core::simnet::{gen_config, gen_random, oracle_calibrated, run_into, GenParams, Outcome, Rates, Scenario, Speed};
use hub_core::Store;

fn params(seed: u64) -> GenParams {
    GenParams {
        duration_ms: 60_000 + (seed * 7_919) % 540_000,
        nodes: 1 + (seed % 5) as usize,
        rates: Rates { readings_per_s: 0.5, frames_per_s: 0.2, actions_per_s: 0.08 },
    }
}

#[test]
fn engine_agrees_with_oracle_on_random_scenarios() {
    for seed in 0..150 {
        let scenario = gen_random(seed, &params(seed));
        let (cfg, cals) = gen_config(seed);
        let hub = run_into(&scenario, &cfg, &cals, Store::in_memory(), Speed::Instant).unwrap();
        let got = Outcome::from_entries(hub.store().entries());
        let want = oracle_calibrated(&scenario, &cfg, &cals);
        assert!(got == want, "seed {seed}: {:?}", got.diff(&want));
    }
}

#[test]
fn scenario_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.jsonl");
    let s = gen_random(9, &params(9));
    std::fs::write(&path, s.to_text()).unwrap();
    assert_eq!(Scenario::load(&path).unwrap(), s);
}

#[test]
fn persistent_and_memory_runs_share_a_digest() {
    let s = gen_random(3, &params(3));
    let (cfg, cals) = gen_config(3);
    let dir = tempfile::tempdir().unwrap();
    let on_disk = run_into(&s, &cfg, &cals, Store::open(dir.path(), hub_core::Durability::Relaxed).unwrap(), Speed::Instant)
        .unwrap();
    let in_mem = run_into(&s, &cfg, &cals, Store::in_memory(), Speed::Instant).unwrap();
    assert_eq!(on_disk.store().digest(), in_mem.store().digest());
    let reopened = Store::open(dir.path(), hub_core::Durability::Relaxed).unwrap();
    assert_eq!(reopened.digest(), in_mem.store().digest());
}
