use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hub_client::{ApiClient, NodeClient};
use hub_core::config::HubConfig;
use hub_core::simnet::{self, gen_config, gen_random, oracle_calibrated, run_into, GenParams, Outcome, Scenario, Speed};
use hub_core::{Durability, Store};
use hub_service::ServeError;

#[derive(Parser)]
#[command(name = "hub", version, about = "Local-only data capture hub")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hub: broker plus HTTP API, until interrupted.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        broker_port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Replay a scenario and print the resulting digest and stats.
    Replay {
        #[command(flatten)]
        input: ScenarioArgs,
        /// Skip the waits between events.
        #[arg(long)]
        instant: bool,
        /// Store the result here instead of in memory.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Send the scenario to a running hub's broker instead (its clock
        /// must be driven).
        #[arg(long)]
        broker_port: Option<u16>,
    },
    /// Compare the engine against the brute-force oracle; exit 0 iff equal.
    Verify {
        #[command(flatten)]
        input: ScenarioArgs,
    },
    /// Write a zip bundle of a store directory, or of a running hub.
    Export {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the digest of a store directory, or of a running hub.
    Digest {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Generate a random scenario, and optionally a matching config.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario output path; stdout when absent.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Also write a generated config here.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 600_000)]
        duration_ms: u64,
        #[arg(long, default_value_t = 4)]
        nodes: usize,
    },
    #[command(hide = true)]
    Torture {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 300)]
        ops: usize,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Exit 1 for bad input, 2 for failures while running.
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Invalid(m) | Failure::Runtime(m)) = &f;
            eprintln!("hub: {m}");
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<HubConfig, Failure> {
    match path {
        Some(p) => HubConfig::load(p).map_err(|e| Failure::Invalid(e.to_string())),
        None => Ok(HubConfig::default()),
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::load(path).map_err(|e| Failure::Invalid(e.to_string()))
}

fn tokio() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Runtime::new().map_err(runtime)
}

fn local(port: u16) -> String {
    format!("http://{}", SocketAddr::from((Ipv4Addr::LOCALHOST, port)))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Serve { config, port, broker_port, data_dir } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.api_port = port.unwrap_or(cfg.api_port);
            cfg.broker_port = broker_port.unwrap_or(cfg.broker_port);
            cfg.data_dir = data_dir.or(cfg.data_dir);
            serve(cfg)
        }
        Command::Replay { input, instant, data_dir, broker_port } => {
            let scenario = load_scenario(&input.scenario)?;
            if let Some(port) = broker_port {
                let digest = tokio()?.block_on(async {
                    let mut node = NodeClient::connect(SocketAddr::from((Ipv4Addr::LOCALHOST, port)), "simnet").await?;
                    node.play(&scenario).await
                });
                println!("digest: {}", digest.map_err(runtime)?);
                return Ok(());
            }
            let cfg = load_config(input.config.as_deref())?;
            let store = match data_dir {
                Some(d) => Store::open(d, Durability::Sync).map_err(runtime)?,
                None => Store::in_memory(),
            };
            let speed = if instant { Speed::Instant } else { Speed::Realtime };
            let hub = run_into(&scenario, &cfg.policy, &cfg.calibration_map(), store, speed).map_err(runtime)?;
            let report = simnet::report(&hub);
            println!("digest: {}", report.digest);
            println!("stats: {}", serde_json::to_string(&report.stats).expect("stats serialize"));
            Ok(())
        }
        Command::Verify { input } => {
            let scenario = load_scenario(&input.scenario)?;
            let cfg = load_config(input.config.as_deref())?;
            let cals = cfg.calibration_map();
            let hub = run_into(&scenario, &cfg.policy, &cals, Store::in_memory(), Speed::Instant).map_err(runtime)?;
            let engine = Outcome::from_entries(hub.store().entries());
            let oracle = oracle_calibrated(&scenario, &cfg.policy, &cals);
            let diff = engine.diff(&oracle);
            if diff.is_empty() {
                println!("engine and oracle agree: {} photos", engine.photos.len());
                Ok(())
            } else {
                for line in &diff {
                    println!("{line}");
                }
                Err(Failure::Invalid(format!("engine and oracle disagree in {} places", diff.len())))
            }
        }
        Command::Export { data_dir, port, out } => {
            let bytes = match (data_dir, port) {
                (Some(d), _) => open_existing(&d)?.export_bytes().map_err(runtime)?,
                (None, port) => tokio()?
                    .block_on(ApiClient::new(local(port.unwrap_or(hub_core::config::DEFAULT_API_PORT))).export())
                    .map_err(runtime)?,
            };
            std::fs::write(&out, &bytes).map_err(runtime)?;
            println!("wrote {} bytes to {}", bytes.len(), out.display());
            Ok(())
        }
        Command::Digest { data_dir, port } => {
            let (digest, entries) = match (data_dir, port) {
                (Some(d), _) => {
                    let store = open_existing(&d)?;
                    (store.digest(), store.len())
                }
                (None, port) => {
                    let api = ApiClient::new(local(port.unwrap_or(hub_core::config::DEFAULT_API_PORT)));
                    let info = tokio()?.block_on(api.digest()).map_err(runtime)?;
                    (info.digest, info.entries)
                }
            };
            println!("{digest} {entries}");
            Ok(())
        }
        Command::Gen { seed, scenario, config, duration_ms, nodes } => {
            let params = GenParams { duration_ms, nodes, ..GenParams::default() };
            let s = gen_random(seed, &params);
            match scenario {
                Some(p) => std::fs::write(p, s.to_text()).map_err(runtime)?,
                None => print!("{}", s.to_text()),
            }
            if let Some(p) = config {
                let (policy, cals) = gen_config(seed);
                let cfg = HubConfig { policy, calibrations: cals.into_values().collect(), ..HubConfig::default() };
                let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
                std::fs::write(p, text + "\n").map_err(runtime)?;
            }
            Ok(())
        }
        Command::Torture { data_dir, seed, ops } => {
            let mut store = Store::open(&data_dir, Durability::Sync).map_err(runtime)?;
            if !store.is_empty() {
                return Err(Failure::Invalid(format!("{} is not empty", data_dir.display())));
            }
            for (i, op) in hub_cli::torture::schedule(seed, ops).iter().enumerate() {
                hub_cli::torture::apply(&mut store, op).map_err(runtime)?;
                println!("{}", i + 1);
            }
            Ok(())
        }
    }
}

/// A store directory that must already exist; opening never creates one here.
fn open_existing(dir: &Path) -> Result<Store, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Invalid(format!("{} is not a store directory", dir.display())));
    }
    Store::open(dir, Durability::Sync).map_err(runtime)
}

fn serve(cfg: HubConfig) -> Result<(), Failure> {
    tracing_subscriber::fmt().with_target(false).with_writer(std::io::stderr).init();
    tokio()?.block_on(async {
        let running = hub_service::start(cfg).await.map_err(|e| match e {
            ServeError::Config(_) => Failure::Invalid(e.to_string()),
            other => runtime(other),
        })?;
        println!("api http://{}  broker {}", running.api_addr, running.broker_addr);
        tokio::signal::ctrl_c().await.map_err(runtime)?;
        running.shutdown().await;
        Ok(())
    })
}
