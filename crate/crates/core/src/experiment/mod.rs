//! Experiment orchestration: rate studies, the check suite and the
//! complexity sweeps, each writing CSV tables tagged with the config hash.

pub mod checks;
pub mod config;
pub mod rates;
pub mod sweep;
pub mod table;

pub use checks::{run_checks, CheckReport, CheckRow};
pub use config::ExperimentConfig;
pub use rates::{run_rates, RateResult};
pub use sweep::run_complexity;
