//! Configuration-driven runs of the shell identification pipeline.

pub mod commands;
pub mod config;

use thiserror::Error;

pub use commands::{run_convergence, run_forward, run_identify, run_stats, run_synth, Outcome};
pub use config::{CaseRef, ConvergenceConfig, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 3;
    pub const FORWARD: i32 = 4;
    pub const OPTIMIZER: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("forward solve failed: {0}")]
    Forward(shellid_core::Error),

    #[error("optimizer: {0}")]
    Optimizer(String),

    #[error(transparent)]
    Core(shellid_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl From<shellid_core::Error> for CliError {
    fn from(e: shellid_core::Error) -> Self {
        use shellid_core::Error as E;
        match e {
            e if e.is_forward_failure() => CliError::Forward(e),
            E::Config(m) | E::InvalidInput(m) | E::InvalidKnotVector(m) | E::MaterialMapping(m) => CliError::Config(m),
            e => CliError::Core(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Forward(_) => exit::FORWARD,
            CliError::Optimizer(_) => exit::OPTIMIZER,
            CliError::Core(_) | CliError::Io(_) | CliError::Json(_) | CliError::Csv(_) => exit::IO,
        }
    }
}
