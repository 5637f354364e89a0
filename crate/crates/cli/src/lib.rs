//! Configuration files, run orchestration and result files for `qheom`.
//!
//! The binary is a thin shell over [`config::parse_with_overrides`] and
//! [`runner::execute`]; both are public so that tests and scripts can drive
//! a run without a subprocess.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use config::{parse_config, parse_with_overrides, Mode, RunConfig};
pub use error::{ConfigError, RunError};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "QHEOM_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`], if set.
pub fn configure_threads() -> Result<Option<usize>, ConfigError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::Threads(format!("expected a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::Threads(e.to_string()))?;
    Ok(Some(n))
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
