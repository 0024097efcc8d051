//! Experiment runner for the `dualaoi` toolkit: scenario files, parameter
//! sweeps, CSV output and the `dualaoi` command line.

pub mod app;
pub mod runner;
pub mod scenario;
pub mod table;
pub mod timing;

use thiserror::Error;

pub use runner::{run_scenario, RunOverrides};
pub use scenario::{Evaluation, PolicyId, Scenario};
pub use table::{emit_csv, read_csv, Row};
pub use timing::{time_policies, TimingRow};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: arguments, scenario files, parameter values.
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}
