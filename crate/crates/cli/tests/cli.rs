use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use hub_core::config::HubConfig;
use hub_core::simnet::{oracle_calibrated, run_into, Outcome, Scenario, Speed};
use hub_core::Store;

fn hub(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hub")).args(args).output().unwrap()
}

fn text(out: &Output) -> (String, String) {
    (String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn gen(dir: &Path, seed: u64) -> (String, String) {
    let s = dir.join(format!("s{seed}.jsonl")).display().to_string();
    let c = dir.join(format!("c{seed}.json")).display().to_string();
    let out = hub(&["gen", "--seed", &seed.to_string(), "--duration-ms", "90000", "--scenario", &s, "--config", &c]);
    assert!(out.status.success(), "{:?}", text(&out));
    (s, c)
}

#[test]
fn replay_prints_digest_and_stats_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (s, c) = gen(dir.path(), 2);
    let first = hub(&["replay", "--scenario", &s, "--config", &c, "--instant"]);
    assert_eq!(first.status.code(), Some(0));
    let (stdout, _) = text(&first);
    assert!(stdout.starts_with("digest: "));
    assert!(stdout.contains("stats: {"));
    assert_eq!(first.stdout, hub(&["replay", "--scenario", &s, "--config", &c, "--instant"]).stdout);

    let cfg = HubConfig::load(&c).unwrap();
    let scenario = Scenario::load(&s).unwrap();
    let hub_run =
        run_into(&scenario, &cfg.policy, &cfg.calibration_map(), Store::in_memory(), Speed::Instant).unwrap();
    assert!(stdout.contains(&hub_run.store().digest()));
}

#[test]
fn verify_exit_code_tracks_engine_oracle_equality() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..6 {
        let (s, c) = gen(dir.path(), seed);
        let cfg = HubConfig::load(&c).unwrap();
        let scenario = Scenario::load(&s).unwrap();
        let cals = cfg.calibration_map();
        let hub_run = run_into(&scenario, &cfg.policy, &cals, Store::in_memory(), Speed::Instant).unwrap();
        let equal = Outcome::from_entries(hub_run.store().entries()) == oracle_calibrated(&scenario, &cfg.policy, &cals);
        let out = hub(&["verify", "--scenario", &s, "--config", &c]);
        assert_eq!(out.status.code() == Some(0), equal, "seed {seed}");
    }
}

#[test]
fn usage_and_input_errors_exit_1() {
    let out = hub(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).1.contains("Usage"));
    assert_eq!(hub(&[]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"policy":{"cadence_ms":0}}"#).unwrap();
    let s = dir.path().join("s.jsonl");
    std::fs::write(&s, "{\"t\":0,\"node\":\"cam0\",\"kind\":\"frame_offer\",\"tags\":[\"object\"]}\n").unwrap();
    let out = hub(&["replay", "--scenario", s.to_str().unwrap(), "--config", bad.to_str().unwrap(), "--instant"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).1.contains("cadence"));

    std::fs::write(&s, "{\"t\":0,\"node\":\"cam0\"}\n").unwrap();
    let out = hub(&["verify", "--scenario", s.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).1.contains("line 1"), "{:?}", text(&out));
}

#[test]
fn non_local_bind_exits_2_with_the_guard_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"bind":"0.0.0.0"}"#).unwrap();
    let out = hub(&["serve", "--config", cfg.to_str().unwrap(), "--port", "8080"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).1.contains("refusing to bind 0.0.0.0:8080"));
}

#[test]
fn serve_answers_digest_and_export_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_hub"))
        .args(["serve", "--port", "0", "--broker-port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let port = line.split_whitespace().nth(1).and_then(|url| url.rsplit(':').next()).unwrap().to_string();

    let out = hub(&["digest", "--port", &port]);
    let (stdout, stderr) = text(&out);
    assert!(out.status.success(), "{stderr}");
    assert!(stdout.trim().ends_with(" 0"), "{stdout}");
    let zip = dir.path().join("t.zip");
    assert!(hub(&["export", "--port", &port, "--out", zip.to_str().unwrap()]).status.success());
    assert!(std::fs::metadata(&zip).unwrap().len() > 0);
    child.kill().unwrap();
    child.wait().unwrap();

    let missing = dir.path().join("nope");
    assert_eq!(hub(&["digest", "--data-dir", missing.to_str().unwrap()]).status.code(), Some(1));
}
