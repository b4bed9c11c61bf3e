//! Command-line driver: operator construction, reference spectra, subspace
//! refinement, evaluation, scaling benchmarks and demos, all exchanging data
//! through the `NEOB` bundle format.

pub mod bench;
pub mod bundle;
pub mod commands;

use std::fmt;

pub use commands::{run, Cli};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<neo_core::Error> for CliError {
    fn from(e: neo_core::Error) -> Self {
        use neo_core::Error::*;
        let code = match e {
            IllConditioned { .. } | FactorizationBreakdown { .. } | Numerical(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

/// Defaults shared by the commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub k: usize,
    pub m: usize,
    pub k_neighbors: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            k: 96,
            m: 192,
            k_neighbors: neo_core::laplacian::DEFAULT_K_NEIGHBORS,
            tol: 1e-8,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.k == 0 || self.m < self.k {
            return Err(CliError::usage(format!("need 0 < k <= m, got k = {}, m = {}", self.k, self.m)));
        }
        Ok(())
    }
}
