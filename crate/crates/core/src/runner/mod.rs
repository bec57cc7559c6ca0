//! Experiment orchestration: configuration, the NMSE and SE sweeps,
//! validation oracles and CSV output.

pub mod config;
pub mod output;
pub mod sweep;
pub mod validate;

pub use config::ExperimentConfig;
pub use output::{write_csv, write_csv_to, Combiner, Estimator, Experiment, ResultRow};
pub use sweep::{run_mse_sweep, run_se_sweep, run_sweeps, SweepOutput};
pub use validate::{run_validation, run_validation_with, validation_passed, ValidationScale};
