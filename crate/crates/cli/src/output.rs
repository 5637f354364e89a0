//! File formats: CSV tables and pretty JSON documents.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use qheom::observables::TrajectoryRecord;
use qheom::simulation::{ConvergenceRow, ScanCell};
use serde::Serialize;

use crate::error::RunError;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SCAN_FILE: &str = "scan.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const METADATA_FILE: &str = "run.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const EIGEN_FILE: &str = "eigen.json";
pub const BATH_FILE: &str = "bath.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

pub(crate) fn output_error(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Serialize)]
struct ScanRow<'a> {
    #[serde(rename = "E_1e8Ha")]
    energy: f64,
    tau_ns: f64,
    #[serde(rename = "R")]
    ratio: Option<f64>,
    #[serde(rename = "P_res")]
    p_res: f64,
    #[serde(rename = "P_loss")]
    p_loss: f64,
    status: &'a str,
}

#[derive(Serialize)]
struct ConvergenceCsvRow {
    level: usize,
    n_matsubara: Option<usize>,
    n_ado: usize,
    #[serde(rename = "P_res")]
    p_res: f64,
    #[serde(rename = "P_loss")]
    p_loss: f64,
    #[serde(rename = "R")]
    ratio: Option<f64>,
    #[serde(rename = "dP_res")]
    delta_p_res: Option<f64>,
    #[serde(rename = "dP_loss")]
    delta_p_loss: Option<f64>,
    #[serde(rename = "dR")]
    delta_ratio: Option<f64>,
    max_trajectory_delta: Option<f64>,
}

/// Streams trajectory records to a CSV file.
pub struct TrajectoryWriter {
    inner: csv::Writer<File>,
}

impl TrajectoryWriter {
    pub fn create(path: &Path) -> Result<Self, RunError> {
        let inner = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
        Ok(TrajectoryWriter { inner })
    }

    pub fn write(&mut self, record: &TrajectoryRecord) -> csv::Result<()> {
        self.inner.serialize(record)
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| output_error(path, e))
}

pub fn write_scan(path: &Path, cells: &[ScanCell]) -> Result<(), RunError> {
    let statuses: Vec<String> = cells.iter().map(|c| c.status.to_string()).collect();
    write_rows(
        path,
        cells.iter().zip(&statuses).map(|(c, s)| ScanRow {
            energy: c.energy,
            tau_ns: c.tau_ns,
            ratio: c.ratio,
            p_res: c.p_res,
            p_loss: c.p_loss,
            status: s,
        }),
    )
}

pub fn write_convergence(path: &Path, rows: &[ConvergenceRow]) -> Result<(), RunError> {
    write_rows(
        path,
        rows.iter().map(|r| ConvergenceCsvRow {
            level: r.level,
            n_matsubara: r.n_matsubara,
            n_ado: r.n_ado,
            p_res: r.p_res,
            p_loss: r.p_loss,
            ratio: r.ratio,
            delta_p_res: r.delta_p_res,
            delta_p_loss: r.delta_p_loss,
            delta_ratio: r.delta_ratio,
            max_trajectory_delta: r.max_population_change,
        }),
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let file = File::create(path).map_err(|e| output_error(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| output_error(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| output_error(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    std::fs::write(path, text).map_err(|e| output_error(path, e))
}
