//! Config-driven experiment runner and the acceptance checks.

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;

pub use config::{load_config, parse_config, render_config, ExperimentConfig};
pub use experiments::{run_experiment, EXPERIMENTS};
pub use output::{read_rows, rows_to_string, write_rows, ResultRow};
pub use verify::{verify_suite, CriterionResult, VerifyReport};
