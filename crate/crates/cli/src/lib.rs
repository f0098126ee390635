//! Experiment runner for the coupled evolution equation solvers: config
//! handling, the registry of named problem data, deterministic parallel
//! Monte Carlo drivers, and CSV outputs with reproducibility manifests.

pub mod config;
pub mod output;
pub mod parallel;
pub mod registry;
pub mod runner;
pub mod tabulated;

pub use config::RunConfig;
pub use runner::{run, CliError};

/// Exit code carried by each error class.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Config(_) => 2,
        CliError::Accuracy(_) => 3,
        CliError::Runaway(_) => 4,
        CliError::Io(_) => 1,
    }
}
