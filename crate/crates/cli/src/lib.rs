//! Command-line front end for `ident-core`: argument handling, experiment
//! configuration and sweeps, and the file plumbing behind each subcommand.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use error::{CliError, Result};

/// Sizes the global worker pool from `IDENT_THREADS` when it is set.
pub fn init_thread_pool() -> Result<()> {
    let Ok(value) = std::env::var("IDENT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("IDENT_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
