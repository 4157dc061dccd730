//! Std companion to `ucfem`: run configurations, the named experiment
//! presets with their expectations, CSV and mesh output, and the runner
//! behind the `ucfem` binary.

pub mod config;
pub mod output;
pub mod presets;
pub mod runner;

use std::path::PathBuf;

/// Process exit codes of the binary.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const IO: i32 = 1;
    pub const EXPECTATION: i32 = 2;
    pub const SOLVER: i32 = 3;
    pub const CONFIG: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(#[from] ucfem::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Solver(_) => exit::SOLVER,
            CliError::Io { .. } => exit::IO,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
