//! Executes a resolved configuration and writes its artifacts.

use std::path::{Path, PathBuf};

use qheom::checkpoint::Checkpoint;
use qheom::simulation::{convergence_study, scan_grid, CellStatus, RunSummary, Simulation};
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::error::RunError;
use crate::output::{self, output_error, TrajectoryWriter};

/// What a finished run left on disk.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// One-line human summary.
    pub message: String,
}

#[derive(Serialize)]
struct Metadata<'a> {
    program: &'static str,
    version: &'static str,
    mode: Mode,
    status: String,
    config: &'a RunConfig,
    /// The same configuration in atomic units, as handed to the model.
    simulation: qheom::simulation::SimulationConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    resumed_from: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<RunSummary>,
}

impl<'a> Metadata<'a> {
    fn new(config: &'a RunConfig) -> Self {
        Metadata {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            mode: config.mode,
            status: "ok".into(),
            config,
            simulation: config.simulation(),
            resumed_from: None,
            summary: None,
        }
    }
}

/// Runs `config`, resuming from a checkpoint file when one is given
/// (trajectory modes only).
pub fn execute(config: &RunConfig, resume: Option<&Path>) -> Result<Outcome, RunError> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
    let mut files = Vec::new();
    let echo = dir.join(output::CONFIG_ECHO_FILE);
    output::write_text(&echo, &config.to_toml())?;
    files.push(echo);
    match config.mode {
        Mode::Trajectory | Mode::FieldFree => trajectory(config, resume, files),
        Mode::Scan => {
            reject_resume(resume)?;
            scan(config, files)
        }
        Mode::Convergence => {
            reject_resume(resume)?;
            convergence(config, files)
        }
    }
}

fn reject_resume(resume: Option<&Path>) -> Result<(), RunError> {
    match resume {
        None => Ok(()),
        Some(_) => Err(RunError::Config(crate::error::ConfigError::Invalid {
            location: "--resume".into(),
            key: "mode".into(),
            message: "only trajectory and field_free runs can be resumed".into(),
        })),
    }
}

fn trajectory(config: &RunConfig, resume: Option<&Path>, mut files: Vec<PathBuf>) -> Result<Outcome, RunError> {
    let dir = &config.output.dir;
    let sim_config = config.simulation();
    let mut meta = Metadata::new(config);
    let mut sim = match resume {
        None => Simulation::new(sim_config)?,
        Some(path) => {
            let cp = Checkpoint::load(path).map_err(|e| RunError::Setup(e))?;
            meta.resumed_from = Some(path.display().to_string());
            Simulation::resume(sim_config, &cp)?
        }
    };

    if config.output.reports {
        let eigen = dir.join(output::EIGEN_FILE);
        output::write_json(&eigen, &sim.eigen().report())?;
        files.push(eigen);
        if let Some(exp) = sim.expansion() {
            let bath = dir.join(output::BATH_FILE);
            output::write_json(&bath, exp)?;
            files.push(bath);
        }
    }

    let csv_path = dir.join(output::TRAJECTORY_FILE);
    let mut writer = TrajectoryWriter::create(&csv_path)?;
    let checkpoint_path = dir.join(output::CHECKPOINT_FILE);
    let mut sink = |r: &qheom::observables::TrajectoryRecord| {
        writer
            .write(r)
            .map_err(|e| qheom::Error::Io(std::io::Error::other(e.to_string())))
    };
    let result = match config.output.checkpoint_interval_ns {
        None => sim.run(&mut sink),
        Some(every) => (|| {
            // Counted rather than derived from the clock, which carries
            // unit round-off and could stall just short of a boundary.
            let mut k = (sim.t_ns() / every + 1e-9).floor() as u64 + 1;
            loop {
                let next = k as f64 * every;
                sim.run_until(next, &mut sink)?;
                sim.checkpoint().save(&checkpoint_path)?;
                if next >= config.t_final_ns {
                    break;
                }
                k += 1;
            }
            Ok(())
        })(),
    };
    writer.finish().map_err(|e| output_error(&csv_path, e))?;
    files.push(csv_path);
    if config.output.checkpoint_interval_ns.is_some() {
        files.push(checkpoint_path);
    }

    let summary = sim.summary();
    if let Err(e) = &result {
        meta.status = format!("failed: {e}");
    }
    meta.summary = Some(summary.clone());
    let meta_path = dir.join(output::METADATA_FILE);
    output::write_json(&meta_path, &meta)?;
    files.push(meta_path);
    result.map_err(|e| match e {
        qheom::Error::Io(io) => output_error(&dir.join(output::TRAJECTORY_FILE), io),
        e => RunError::from(e),
    })?;

    let ratio = summary.ratio.map_or("undefined".to_string(), |r| format!("{r:.6}"));
    Ok(Outcome {
        files,
        message: format!(
            "{} run to {:.3} ns: P_res = {:.6e}, P_loss = {:.6e}, R = {ratio}",
            config.mode.name(),
            summary.t_ns,
            summary.p_res,
            summary.p_loss
        ),
    })
}

fn scan(config: &RunConfig, mut files: Vec<PathBuf>) -> Result<Outcome, RunError> {
    let dir = &config.output.dir;
    let mut base = config.simulation();
    // Each cell is a separate task; nested parallelism would only contend.
    base.parallel = base.parallel && !config.scan_parallel;
    let cells = scan_grid(&base, &config.scan_energies, &config.scan_taus_ns, config.scan_parallel);
    let path = dir.join(output::SCAN_FILE);
    output::write_scan(&path, &cells)?;
    files.push(path);
    let failed = cells.iter().filter(|c| matches!(c.status, CellStatus::Failed(_))).count();
    let mut meta = Metadata::new(config);
    if failed > 0 {
        meta.status = format!("{failed} of {} cells failed", cells.len());
    }
    let meta_path = dir.join(output::METADATA_FILE);
    output::write_json(&meta_path, &meta)?;
    files.push(meta_path);
    if failed > 0 {
        return Err(RunError::ScanCells {
            failed,
            total: cells.len(),
        });
    }
    let (lo, hi) = cells
        .iter()
        .filter_map(|c| c.ratio)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    Ok(Outcome {
        files,
        message: format!("scan of {} cells: R from {lo:.6} to {hi:.6}", cells.len()),
    })
}

fn convergence(config: &RunConfig, mut files: Vec<PathBuf>) -> Result<Outcome, RunError> {
    let dir = &config.output.dir;
    let rows = convergence_study(&config.simulation(), &config.convergence_settings())?;
    let path = dir.join(output::CONVERGENCE_FILE);
    output::write_convergence(&path, &rows)?;
    files.push(path);
    let meta_path = dir.join(output::METADATA_FILE);
    output::write_json(&meta_path, &Metadata::new(config))?;
    files.push(meta_path);
    let worst = rows
        .iter()
        .filter_map(|r| r.max_population_change)
        .fold(0.0, f64::max);
    Ok(Outcome {
        files,
        message: format!(
            "convergence over {} settings: largest change between neighbours {worst:.3e}",
            rows.len()
        ),
    })
}
