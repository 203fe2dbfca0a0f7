//! Household simulator: scenario files, a seeded generator, a runner and a
//! reference oracle.

pub mod gen;
pub mod oracle;
pub mod run;
pub mod scenario;

pub use gen::{gen_config, gen_random, GenParams, Rates};
pub use oracle::{oracle, oracle_calibrated, Outcome, PhotoRecord, UnavailableInterval};
pub use run::{inject, report, run, run_into, RunReport, Speed};
pub use scenario::{EventKind, Scenario, ScenarioEvent};
