//! End-to-end runs: configuration, trajectory propagation, pulse scans and
//! truncation-level convergence.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{self, BathConfig, BathExpansion, Regime, SpectralDensityParams};
use crate::checkpoint::Checkpoint;
use crate::driving::{self, Pulse};
use crate::error::{Error, Result};
use crate::heom::{EmissionRates, HeomOptions, HeomSystem};
use crate::hierarchy::DEFAULT_BUDGET;
use crate::integrator::{CashKarp, StepControl, StepStats};
use crate::linalg::{Mat8, DIM2};
use crate::network::{build_operators, eigenanalyze, EigenStructure, NetworkSpec, StateLabel, SystemOperators};
use crate::observables::{Diagnostics, FluxIntegral, TrajectoryRecord};
use crate::units;

/// How the pulse strength is specified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseStrength {
    /// Integrated intensity ∫E² dt, a.u.
    Energy(f64),
    /// Peak field A, a.u.
    Amplitude(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSettings {
    pub strength: PulseStrength,
    pub tau_ns: f64,
    /// Carrier frequency; `None` puts it on the g → B transition.
    pub carrier_ghz: Option<f64>,
}

impl Default for PulseSettings {
    fn default() -> Self {
        PulseSettings {
            strength: PulseStrength::Energy(units::PULSE_ENERGY_UNIT),
            tau_ns: 5.0,
            carrier_ghz: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    /// Rotating with the carrier (or ω_gB without a pulse).
    Rotating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub network: NetworkSpec,
    /// `None` runs without a bath.
    pub bath: Option<BathConfig>,
    /// `None` runs field-free.
    pub pulse: Option<PulseSettings>,
    pub g3_mhz: f64,
    pub g12_mhz: f64,
    pub level: usize,
    pub scaled_ados: bool,
    pub renormalization: bool,
    pub stiff_factor: Option<f64>,
    pub parallel: bool,
    pub budget: usize,
    pub frame: Frame,
    pub control: StepControl,
    pub t_final_ns: f64,
    pub output_interval_ns: f64,
    /// Eigenstate the system starts in.
    pub initial: StateLabel,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            network: NetworkSpec::default(),
            bath: Some(BathConfig::classical()),
            pulse: Some(PulseSettings::default()),
            g3_mhz: 10.0,
            g12_mhz: 10.0,
            level: 4,
            scaled_ados: true,
            renormalization: true,
            stiff_factor: Some(100.0),
            parallel: false,
            budget: DEFAULT_BUDGET,
            frame: Frame::Rotating,
            control: StepControl::default(),
            t_final_ns: 500.0,
            output_interval_ns: 0.5,
            initial: StateLabel::G,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if let Some(b) = &self.bath {
            b.validate()?;
        }
        if let Some(p) = &self.pulse {
            if !(p.tau_ns.is_finite() && p.tau_ns > 0.0) {
                return Err(Error::Pulse(format!("tau_ns must be positive, got {}", p.tau_ns)));
            }
            match p.strength {
                PulseStrength::Energy(e) if !(e.is_finite() && e > 0.0) => {
                    return Err(Error::Pulse(format!("energy must be positive, got {e}")))
                }
                PulseStrength::Amplitude(a) if !a.is_finite() => {
                    return Err(Error::Pulse("amplitude must be finite".into()))
                }
                _ => {}
            }
            if let Some(c) = p.carrier_ghz {
                if !(c.is_finite() && c > 0.0) {
                    return Err(Error::Pulse(format!("carrier_ghz must be positive, got {c}")));
                }
            }
        }
        for (name, v) in [("g3_mhz", self.g3_mhz), ("g12_mhz", self.g12_mhz)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Network(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.t_final_ns.is_finite() && self.t_final_ns > 0.0) {
            return Err(Error::Integrator(format!("t_final_ns must be positive, got {}", self.t_final_ns)));
        }
        if !(self.output_interval_ns.is_finite() && self.output_interval_ns > 0.0) {
            return Err(Error::Integrator(format!(
                "output_interval_ns must be positive, got {}",
                self.output_interval_ns
            )));
        }
        self.control.validate()
    }

    pub fn rates(&self) -> EmissionRates {
        EmissionRates {
            resonator: units::mhz_rate_to_au(self.g3_mhz),
            waveguide: units::mhz_rate_to_au(self.g12_mhz),
        }
    }
}

/// Static facts about a prepared run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub n_ado: usize,
    pub n_modes: usize,
    pub n_eliminated: usize,
    pub regime: Option<Regime>,
    /// Spectral density after η calibration.
    pub bath_params: Option<SpectralDensityParams>,
    pub reorganization_energy: f64,
    pub eta: Option<f64>,
    pub omega_gb_ghz: f64,
    pub omega_bd_ghz: f64,
    pub pulse: Option<Pulse>,
    /// ∫E² dt by quadrature, as a cross-check of the closed form.
    pub pulse_energy_quadrature: Option<f64>,
    pub frame_omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub info: RunInfo,
    pub t_ns: f64,
    pub p_res: f64,
    pub p_loss: f64,
    /// `None` when nothing was emitted.
    pub ratio: Option<f64>,
    pub stats: StepStats,
    pub diagnostics: Diagnostics,
}

/// A trajectory in progress.
pub struct Simulation {
    config: SimulationConfig,
    ops: SystemOperators,
    eig: EigenStructure,
    expansion: Option<BathExpansion>,
    system: HeomSystem,
    rates: EmissionRates,
    info: RunInfo,
    stepper: CashKarp,
    t: f64,
    y: Vec<C64>,
    outputs: Vec<f64>,
    next_output: usize,
    flux: FluxIntegral,
    diagnostics: Diagnostics,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Result<Simulation> {
        config.validate()?;
        let ops = build_operators(&config.network)?;
        let eig = eigenanalyze(&ops)?;

        let (expansion, lambda, eta) = match &config.bath {
            None => (None, 0.0, None),
            Some(b) => {
                let exp = bath::expand_config(b, eig.omega_bd())?;
                let lambda = bath::reorganization_energy(&exp.params)?;
                let eta = lambda / eig.omega_bd();
                (Some(exp), lambda, Some(eta))
            }
        };
        let ops = if config.renormalization {
            ops.with_reorganization(lambda)
        } else {
            ops
        };

        let pulse = match &config.pulse {
            None => None,
            Some(p) => {
                let carrier = p.carrier_ghz.map(units::ghz_to_au).unwrap_or_else(|| eig.omega_gb());
                let tau = units::ns_to_au(p.tau_ns);
                Some(match p.strength {
                    PulseStrength::Energy(e) => Pulse::with_energy(e, tau, carrier)?,
                    PulseStrength::Amplitude(a) => Pulse::new(a, tau, carrier)?,
                })
            }
        };
        let frame_omega = match config.frame {
            Frame::Lab => 0.0,
            Frame::Rotating => pulse.map(|p| p.carrier).unwrap_or_else(|| eig.omega_gb()),
        };

        let rates = config.rates();
        let options = HeomOptions {
            level: config.level,
            scaled_ados: config.scaled_ados,
            renormalization: config.renormalization,
            frame_omega,
            stiff_factor: config.stiff_factor,
            parallel: config.parallel,
            budget: config.budget,
        };
        let system = HeomSystem::new(&ops, expansion.as_ref(), pulse, rates, options)?;

        let info = RunInfo {
            n_ado: system.n_ado(),
            n_modes: system.modes().len(),
            n_eliminated: system.eliminated().len(),
            regime: expansion.as_ref().map(|e| e.regime),
            bath_params: expansion.as_ref().map(|e| e.params),
            reorganization_energy: lambda,
            eta,
            omega_gb_ghz: units::au_to_ghz(eig.omega_gb()),
            omega_bd_ghz: units::au_to_ghz(eig.omega_bd()),
            pulse,
            pulse_energy_quadrature: match &pulse {
                Some(p) => Some(driving::pulse_energy(p)?),
                None => None,
            },
            frame_omega,
        };

        let rho0 = eig.projector(config.initial);
        let y = system.initial_state(&rho0);
        let stepper = CashKarp::new(system.dim(), config.control.clone())?;

        let dt = units::ns_to_au(config.output_interval_ns);
        let n_out = (config.t_final_ns / config.output_interval_ns).round() as usize;
        let outputs = (0..=n_out).map(|k| k as f64 * dt).collect();

        Ok(Simulation {
            config,
            ops,
            eig,
            expansion,
            system,
            rates,
            info,
            stepper,
            t: 0.0,
            y,
            outputs,
            next_output: 0,
            flux: FluxIntegral::default(),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn info(&self) -> &RunInfo {
        &self.info
    }

    pub fn eigen(&self) -> &EigenStructure {
        &self.eig
    }

    pub fn operators(&self) -> &SystemOperators {
        &self.ops
    }

    pub fn expansion(&self) -> Option<&BathExpansion> {
        self.expansion.as_ref()
    }

    pub fn system(&self) -> &HeomSystem {
        &self.system
    }

    /// Current time in ns.
    pub fn t_ns(&self) -> f64 {
        units::au_to_ns(self.t)
    }

    /// Lab-frame system density matrix now.
    pub fn rho(&self) -> Mat8 {
        self.system.system_matrix(self.t, &self.y)
    }

    pub fn state(&self) -> &[C64] {
        &self.y
    }

    /// Samples the output grid at time t from the system block `head`.
    fn emit<F>(&mut self, t: f64, head: &[C64], sink: &mut F) -> Result<()>
    where
        F: FnMut(&TrajectoryRecord) -> Result<()>,
    {
        let rho = self.system.system_matrix(t, head);
        let (fr, fl) = crate::observables::emission_fluxes(&rho, &self.ops, &self.rates);
        self.flux.add_sample(t, fr, fl);
        self.diagnostics.observe(&rho);
        let mut rec = TrajectoryRecord::from_state(
            t,
            &rho,
            &self.eig,
            &self.ops,
            &self.rates,
            (self.flux.p_res, self.flux.p_loss),
        );
        // Grid times exactly as configured, free of unit round-off.
        rec.t_ns = self.next_output as f64 * self.config.output_interval_ns;
        self.next_output += 1;
        sink(&rec)
    }

    /// Propagates to `t_ns` (clamped to the final time), passing every
    /// output-grid record on the way to `sink`.
    pub fn run_until<F>(&mut self, t_ns: f64, mut sink: F) -> Result<()>
    where
        F: FnMut(&TrajectoryRecord) -> Result<()>,
    {
        let t_stop = units::ns_to_au(t_ns.min(self.config.t_final_ns));
        let t_stop = match self.outputs.last() {
            Some(&last) if t_ns >= self.config.t_final_ns => last,
            _ => t_stop,
        };
        if self.next_output == 0 && self.t == 0.0 {
            let head = self.y[..DIM2].to_vec();
            self.emit(0.0, &head, &mut sink)?;
        }

        let mut stops: Vec<f64> = self.outputs[self.next_output..]
            .iter()
            .copied()
            .take_while(|&t| t <= t_stop)
            .collect();
        if stops.last().map_or(true, |&l| l < t_stop) && t_stop > self.t {
            stops.push(t_stop);
        }
        let pulse_end = self.system.pulse().map(|p| p.tau_max);
        if let Some(te) = pulse_end {
            let near = |s: &f64| (s - te).abs() <= 1e-9 * te;
            if te > self.t && te < t_stop && !stops.iter().any(near) {
                stops.push(te);
                stops.sort_by(|a, b| a.total_cmp(b));
            }
        }

        let base_max = self.config.control.max_step;
        let driven_max = match self.system.pulse() {
            Some(p) => {
                // Eight samples per period of the fastest drive component.
                let fastest = p.carrier + self.system.options().frame_omega;
                base_max.min(2.0 * PI / fastest / 8.0)
            }
            None => base_max,
        };
        let split = pulse_end.map_or(0, |te| stops.partition_point(|&s| s <= te));
        let (driven, free) = stops.split_at(split);

        for (segment, max_step) in [(driven, driven_max), (free, base_max)] {
            if segment.is_empty() {
                continue;
            }
            self.stepper.set_max_step(max_step);
            let mut hits = Vec::new();
            let mut next = self.next_output;
            let outputs = &self.outputs;
            let result = self.stepper.integrate(&self.system, &mut self.t, &mut self.y, segment, |t, y| {
                if next < outputs.len() && outputs[next] == t {
                    hits.push((t, y[..DIM2].to_vec()));
                    next += 1;
                }
                Ok(())
            });
            // Records reached before a failure are still delivered.
            for (t, head) in hits {
                self.emit(t, &head, &mut sink)?;
            }
            result?;
        }
        Ok(())
    }

    /// Runs to the configured final time.
    pub fn run<F>(&mut self, sink: F) -> Result<()>
    where
        F: FnMut(&TrajectoryRecord) -> Result<()>,
    {
        self.run_until(self.config.t_final_ns, sink)
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            info: self.info.clone(),
            t_ns: self.t_ns(),
            p_res: self.flux.p_res,
            p_loss: self.flux.p_loss,
            ratio: self.flux.ratio().ok(),
            stats: self.stepper.stats,
            diagnostics: self.diagnostics,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(
            &self.config,
            self.system.hierarchy().descriptor(),
            self.t,
            self.stepper.next_step,
            self.next_output,
            self.flux,
            self.diagnostics,
            self.stepper.stats,
            &self.y,
        )
    }

    /// Rebuilds a simulation from a checkpoint taken with the same settings.
    pub fn resume(config: SimulationConfig, cp: &Checkpoint) -> Result<Simulation> {
        let mut sim = Simulation::new(config)?;
        cp.check_compatible(&sim.config, &sim.system.hierarchy().descriptor(), sim.y.len())?;
        sim.t = cp.t;
        sim.y = cp.state()?;
        sim.stepper.next_step = cp.next_step;
        sim.stepper.stats = cp.stats;
        sim.next_output = cp.next_output;
        sim.flux = cp.flux;
        sim.diagnostics = cp.diagnostics;
        Ok(sim)
    }
}

/// Runs a full trajectory and collects every record.
pub fn run_trajectory(config: SimulationConfig) -> Result<(Vec<TrajectoryRecord>, RunSummary)> {
    let mut sim = Simulation::new(config)?;
    let mut records = Vec::new();
    sim.run(|r| {
        records.push(*r);
        Ok(())
    })?;
    Ok((records, sim.summary()))
}

/// Outcome of one scan cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    UndefinedRatio,
    Failed(String),
}

impl std::fmt::Display for CellStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellStatus::Ok => f.write_str("ok"),
            CellStatus::UndefinedRatio => f.write_str("undefined_ratio"),
            CellStatus::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanCell {
    /// Pulse energy in units of 1e-8 a.u.
    pub energy: f64,
    pub tau_ns: f64,
    pub ratio: Option<f64>,
    pub p_res: f64,
    pub p_loss: f64,
    pub status: CellStatus,
}

/// Energies (units of 1e-8 a.u.) of the default scan.
pub const DEFAULT_SCAN_ENERGIES: [f64; 6] = [1.0, 2.5, 5.0, 10.0, 20.0, 40.0];
/// Durations (ns) of the default scan.
pub const DEFAULT_SCAN_TAUS: [f64; 7] = [5.0, 25.0, 50.0, 100.0, 150.0, 200.0, 250.0];

fn scan_cell(base: &SimulationConfig, energy: f64, tau_ns: f64) -> ScanCell {
    let mut config = base.clone();
    let carrier_ghz = base.pulse.as_ref().and_then(|p| p.carrier_ghz);
    config.pulse = Some(PulseSettings {
        strength: PulseStrength::Energy(energy * units::PULSE_ENERGY_UNIT),
        tau_ns,
        carrier_ghz,
    });
    let outcome = Simulation::new(config).and_then(|mut sim| {
        sim.run(|_| Ok(()))?;
        Ok(sim.summary())
    });
    match outcome {
        Ok(s) => ScanCell {
            energy,
            tau_ns,
            ratio: s.ratio,
            p_res: s.p_res,
            p_loss: s.p_loss,
            status: if s.ratio.is_some() {
                CellStatus::Ok
            } else {
                CellStatus::UndefinedRatio
            },
        },
        Err(e) => ScanCell {
            energy,
            tau_ns,
            ratio: None,
            p_res: f64::NAN,
            p_loss: f64::NAN,
            status: CellStatus::Failed(e.to_string()),
        },
    }
}

/// R over every (energy, τ) pair, energy-major. A failing cell is reported
/// in its status and does not stop the others.
pub fn scan_grid(base: &SimulationConfig, energies: &[f64], taus_ns: &[f64], parallel: bool) -> Vec<ScanCell> {
    let cells: Vec<(f64, f64)> = energies
        .iter()
        .flat_map(|&e| taus_ns.iter().map(move |&t| (e, t)))
        .collect();
    if parallel {
        cells.par_iter().map(|&(e, t)| scan_cell(base, e, t)).collect()
    } else {
        cells.iter().map(|&(e, t)| scan_cell(base, e, t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    /// `None` without a bath.
    pub n_matsubara: Option<usize>,
    pub n_ado: usize,
    pub p_res: f64,
    pub p_loss: f64,
    pub ratio: Option<f64>,
    /// Differences from the previous row; `None` on the first.
    pub delta_p_res: Option<f64>,
    pub delta_p_loss: Option<f64>,
    pub delta_ratio: Option<f64>,
    /// Largest eigenstate-population or coherence difference from the
    /// previous row over the whole trajectory.
    pub max_population_change: Option<f64>,
}

/// Largest pointwise difference between two trajectories on the same grid.
pub fn trajectory_distance(a: &[TrajectoryRecord], b: &[TrajectoryRecord]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let pops = StateLabel::ALL
                .iter()
                .map(|&l| (x.population(l) - y.population(l)).abs())
                .fold(0.0, f64::max);
            pops.max((x.abs_coh_dm_dp - y.abs_coh_dm_dp).abs())
                .max((x.abs_coh_bem_bep - y.abs_coh_bem_bep).abs())
        })
        .fold(0.0, f64::max)
}

/// Repeats a trajectory for each (level, Matsubara count) pair, in the given
/// order, and reports each row against the one before it. The Matsubara
/// count is ignored when the base run has no bath.
pub fn convergence_study(base: &SimulationConfig, settings: &[(usize, usize)]) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut previous: Option<Vec<TrajectoryRecord>> = None;
    for &(level, n_matsubara) in settings {
        let mut config = SimulationConfig {
            level,
            ..base.clone()
        };
        if let Some(b) = config.bath.as_mut() {
            b.n_matsubara = n_matsubara;
        }
        let n_matsubara = config.bath.as_ref().map(|b| b.n_matsubara);
        let (records, summary) = run_trajectory(config)?;
        let last = rows.last();
        let ratio_delta = match (last.and_then(|r| r.ratio), summary.ratio) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
        rows.push(ConvergenceRow {
            level,
            n_matsubara,
            n_ado: summary.info.n_ado,
            p_res: summary.p_res,
            p_loss: summary.p_loss,
            ratio: summary.ratio,
            delta_p_res: last.map(|r| summary.p_res - r.p_res),
            delta_p_loss: last.map(|r| summary.p_loss - r.p_loss),
            delta_ratio: ratio_delta,
            max_population_change: previous.as_ref().map(|prev| trajectory_distance(prev, &records)),
        });
        previous = Some(records);
    }
    Ok(rows)
}
