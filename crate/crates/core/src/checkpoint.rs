//! Versioned JSON snapshots of a running hierarchy.
//!
//! The state is stored as a flat list of `[re, im]` pairs: auxiliary matrix
//! j, element (a, b) sits at position 64·j + 8·a + b, matrices in the order
//! named by `descriptor`. Amplitudes are the scaled ones used in propagation,
//! in the propagation frame.

use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::StepStats;
use crate::observables::{Diagnostics, FluxIntegral};
use crate::simulation::SimulationConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub descriptor: String,
    pub config: SimulationConfig,
    /// Time in a.u.
    pub t: f64,
    pub next_step: f64,
    pub next_output: usize,
    pub flux: FluxIntegral,
    pub diagnostics: Diagnostics,
    pub stats: StepStats,
    pub data: Vec<[f64; 2]>,
}

impl Checkpoint {
    #[allow(clippy::too_many_arguments)]
    pub fn capture(
        config: &SimulationConfig,
        descriptor: String,
        t: f64,
        next_step: f64,
        next_output: usize,
        flux: FluxIntegral,
        diagnostics: Diagnostics,
        stats: StepStats,
        state: &[C64],
    ) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            descriptor,
            config: config.clone(),
            t,
            next_step,
            next_output,
            flux,
            diagnostics,
            stats,
            data: state.iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn state(&self) -> Result<Vec<C64>> {
        if self.data.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Checkpoint("state contains non-finite values".into()));
        }
        Ok(self.data.iter().map(|&[re, im]| C64::new(re, im)).collect())
    }

    /// Errors unless this snapshot can continue a run with `config`. Only the
    /// final time may differ.
    pub fn check_compatible(&self, config: &SimulationConfig, descriptor: &str, len: usize) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.descriptor != descriptor {
            return Err(Error::Checkpoint(format!(
                "hierarchy mismatch: checkpoint has `{}`, run has `{descriptor}`",
                self.descriptor
            )));
        }
        if self.data.len() != len {
            return Err(Error::Checkpoint(format!(
                "state has {} entries, expected {len}",
                self.data.len()
            )));
        }
        let mut mine = self.config.clone();
        mine.t_final_ns = config.t_final_ns;
        if &mine != config {
            return Err(Error::Checkpoint("run settings differ from those of the checkpoint".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
