//! Run configuration files.
//!
//! A configuration is a TOML document of flat keys grouped in sections
//! (`[network]`, `[bath]`, ...). Every key is optional; missing keys take
//! defaults that depend on the mode and the bath preset. Parsing resolves the
//! document into a [`RunConfig`] whose fields are all explicit, and
//! [`RunConfig::to_toml`] writes that resolution back out so that parsing the
//! echo gives the same configuration.
//!
//! Values stay in the units of the file (GHz, MHz, ns, K, 1e-8 hartree) until
//! [`RunConfig::simulation`] converts them to atomic units.

use std::path::PathBuf;

use qheom::bath::{BathConfig, SpectralDensityParams};
use qheom::integrator::StepControl;
use qheom::network::{NetworkSpec, StateLabel};
use qheom::simulation::{Frame, PulseSettings, PulseStrength, SimulationConfig};
use qheom::units;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Matches the library default step.
const DEFAULT_INITIAL_STEP_NS: f64 = 2.5e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One driven trajectory.
    Trajectory,
    /// Relaxation from an eigenstate without field or emission.
    #[value(name = "field_free")]
    FieldFree,
    /// Efficiency ratio over a grid of pulse energies and durations.
    Scan,
    /// The same trajectory at several truncation settings.
    Convergence,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Trajectory => "trajectory",
            Mode::FieldFree => "field_free",
            Mode::Scan => "scan",
            Mode::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathPreset {
    /// 298 K, tabulated amplitude, one Matsubara term.
    Classical,
    /// 0.01 K, amplitude calibrated to η = 0.01, ten Matsubara terms.
    Quantum,
}

impl BathPreset {
    fn base(self) -> BathConfig {
        match self {
            BathPreset::Classical => BathConfig::classical(),
            BathPreset::Quantum => BathConfig::quantum(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseInput {
    /// ∫E² dt in units of 1e-8 hartree.
    Energy(f64),
    /// Peak field in a.u.
    AmplitudeAu(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step_ns: f64,
    /// `None` leaves the step unbounded.
    pub max_step_ns: Option<f64>,
    pub min_step_fraction: f64,
    pub safety: f64,
    pub max_growth: f64,
    pub min_shrink: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Writes the eigenstructure and bath expansion reports.
    pub reports: bool,
    /// Periodic checkpoints of trajectory runs; `None` disables them.
    pub checkpoint_interval_ns: Option<f64>,
}

/// A fully resolved run description, in file units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub network: NetworkSpec,
    pub bath_enabled: bool,
    pub bath_preset: BathPreset,
    pub bath: BathConfig,
    pub pulse_enabled: bool,
    pub pulse: PulseInput,
    pub tau_ns: f64,
    pub carrier_ghz: Option<f64>,
    pub g3_mhz: f64,
    pub g12_mhz: f64,
    pub level: usize,
    pub scaled_ados: bool,
    pub renormalization: bool,
    /// `None` keeps every bath mode in the hierarchy.
    pub stiff_factor: Option<f64>,
    pub parallel: bool,
    pub budget: usize,
    pub frame: Frame,
    pub integrator: IntegratorSettings,
    pub t_final_ns: f64,
    pub output_interval_ns: f64,
    pub initial_state: StateLabel,
    pub scan_energies: Vec<f64>,
    pub scan_taus_ns: Vec<f64>,
    pub scan_parallel: bool,
    pub convergence_levels: Vec<usize>,
    pub convergence_matsubara: Vec<usize>,
    pub output: OutputSettings,
}

// Document layout. Every key is optional so that resolution can tell what
// the file set from what it left to the defaults.

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    network: Option<NetworkSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bath: Option<BathSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pulse: Option<PulseSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    emission: Option<EmissionSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    heom: Option<HeomSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    integrator: Option<IntegratorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<RunSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scan: Option<ScanSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<ConvergenceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<OutputSection>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    omega_ghz: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling_ghz: Option<[[f64; 3]; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coupling_mhz: Option<[[f64; 3]; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dipole_sites: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dipole_moment_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_site: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BathSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<BathPreset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_matsubara: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega1_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma1_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega2_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma2_au: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PulseSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    amplitude_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    carrier_ghz: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmissionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    g3_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g12_mhz: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeomSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaled_ados: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    renormalization: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stiff_elimination: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stiff_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parallel: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame: Option<Frame>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_step_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_step_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_step_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    safety: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_growth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_shrink: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    t_final_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_interval_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    initial_state: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    energies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    taus_ns: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    parallel: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvergenceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_matsubara: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reports: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint_interval_ns: Option<f64>,
}

/// Where a configuration came from, for error messages.
struct Source<'a> {
    name: &'a str,
    text: &'a str,
    overridden: Vec<String>,
}

impl Source<'_> {
    /// "file:line" of `section.key`, or the override that set it.
    fn locate(&self, section: &str, key: &str) -> String {
        let dotted = format!("{section}.{key}");
        if self.overridden.iter().any(|o| o == &dotted || o == section) {
            return format!("--override {dotted}");
        }
        match find_key_line(self.text, section, key) {
            Some(line) => format!("{}:{line}", self.name),
            None => self.name.to_string(),
        }
    }

    fn invalid(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            location: self.locate(section, key),
            key: if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            },
            message: message.into(),
        }
    }
}

/// 1-based line on which `key` is assigned inside `[section]`, also
/// recognising the dotted spelling `section.key = ...`.
fn find_key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let dotted = format!("{section}.{key}");
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_end_matches(']').trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        if (current == section && lhs == key) || (current.is_empty() && lhs == dotted) {
            return Some(i + 1);
        }
    }
    None
}

/// Parses a configuration with its origin `name` used in messages.
pub fn parse_config(text: &str, name: &str) -> Result<RunConfig, ConfigError> {
    parse_with_overrides(text, name, &[])
}

/// Parses a configuration after applying `key=value` overrides. Keys are
/// dotted paths (`pulse.tau_ns`); values are TOML literals, and anything
/// that is not a valid literal is taken as a string.
pub fn parse_with_overrides(text: &str, name: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let syntax = |e: toml::de::Error| ConfigError::Syntax {
        source_name: name.to_string(),
        message: e.to_string(),
    };
    // The file alone first, so that its own mistakes carry line numbers.
    let doc: Document = toml::from_str(text).map_err(syntax)?;
    let doc = if overrides.is_empty() {
        doc
    } else {
        let mut table: toml::Table = text.parse().map_err(syntax)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Document::deserialize(toml::Value::Table(table)).map_err(|e| ConfigError::Override {
            item: overrides.join(" "),
            message: e.to_string(),
        })?
    };
    let source = Source {
        name,
        text,
        overridden: overrides
            .iter()
            .filter_map(|o| o.split_once('=').map(|(k, _)| k.trim().to_string()))
            .collect(),
    };
    resolve(doc, &source)
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let err = |message: &str| ConfigError::Override {
        item: item.to_string(),
        message: message.to_string(),
    };
    let (key, value) = item.split_once('=').ok_or_else(|| err("expected key=value"))?;
    let path: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(err("empty key segment"));
    }
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cursor = table;
    for p in parents {
        let entry = cursor
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| err("path crosses a non-table value"))?;
    }
    cursor.insert(last.to_string(), parsed);
    Ok(())
}

fn positive(source: &Source, section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(source.invalid(section, key, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(source: &Source, section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(source.invalid(section, key, format!("must be non-negative and finite, got {v}")))
    }
}

fn resolve(doc: Document, src: &Source) -> Result<RunConfig, ConfigError> {
    let mode = doc.mode.unwrap_or(Mode::Trajectory);
    let field_free = mode == Mode::FieldFree;

    let net = doc.network.unwrap_or_default();
    let defaults = NetworkSpec::default();
    let omega_ghz = net.omega_ghz.unwrap_or(defaults.omega_ghz);
    for (i, &w) in omega_ghz.iter().enumerate() {
        if !(w.is_finite() && w > 0.0) {
            return Err(src.invalid("network", "omega_ghz", format!("entry {i} must be positive, got {w}")));
        }
    }
    let coupling_ghz = match (net.coupling_ghz, net.coupling_mhz) {
        (Some(_), Some(_)) => {
            return Err(src.invalid(
                "network",
                "coupling_mhz",
                "give the coupling matrix once, as either coupling_ghz or coupling_mhz",
            ))
        }
        (Some(j), None) => check_coupling(src, "coupling_ghz", j)?,
        (None, Some(j)) => check_coupling(src, "coupling_mhz", j)?.map(|row| row.map(|x| x / 1000.0)),
        (None, None) => defaults.coupling_ghz,
    };
    let dipole_sites = net.dipole_sites.unwrap_or(defaults.dipole_sites);
    let mut seen = [false; 3];
    for &s in &dipole_sites {
        if !(1..=3).contains(&s) || std::mem::replace(&mut seen[s - 1], true) {
            return Err(src.invalid(
                "network",
                "dipole_sites",
                format!("sites must be distinct values in 1..=3, got {dipole_sites:?}"),
            ));
        }
    }
    let noise_site = net.noise_site.unwrap_or(defaults.noise_site);
    if !(1..=3).contains(&noise_site) {
        return Err(src.invalid("network", "noise_site", format!("must be in 1..=3, got {noise_site}")));
    }
    let network = NetworkSpec {
        omega_ghz,
        coupling_ghz,
        dipole_sites,
        dipole_moment: match net.dipole_moment_au {
            Some(m) => positive(src, "network", "dipole_moment_au", m)?,
            None => defaults.dipole_moment,
        },
        noise_site,
    };

    let b = doc.bath.unwrap_or_default();
    let bath_preset = b.preset.unwrap_or(BathPreset::Classical);
    let mut bath = bath_preset.base();
    if let Some(t) = b.temperature_k {
        bath.temperature = positive(src, "bath", "temperature_k", t)?;
    }
    if let Some(n) = b.n_matsubara {
        bath.n_matsubara = n;
    }
    match (b.p_au, b.eta_target) {
        (Some(_), Some(_)) => {
            return Err(src.invalid(
                "bath",
                "eta_target",
                "give either p_au or eta_target; eta_target solves p itself",
            ))
        }
        (Some(p), None) => {
            bath.params.p = positive(src, "bath", "p_au", p)?;
            bath.eta_target = None;
        }
        (None, Some(eta)) => bath.eta_target = Some(positive(src, "bath", "eta_target", eta)?),
        (None, None) => {}
    }
    let shape: [(&str, Option<f64>, &mut f64); 4] = [
        ("omega1_au", b.omega1_au, &mut bath.params.omega1),
        ("gamma1_au", b.gamma1_au, &mut bath.params.gamma1),
        ("omega2_au", b.omega2_au, &mut bath.params.omega2),
        ("gamma2_au", b.gamma2_au, &mut bath.params.gamma2),
    ];
    for (key, given, slot) in shape {
        if let Some(v) = given {
            *slot = positive(src, "bath", key, v)?;
        }
    }

    let p = doc.pulse.unwrap_or_default();
    let pulse = match (p.energy, p.amplitude_au) {
        (Some(_), Some(_)) => {
            return Err(src.invalid(
                "pulse",
                "amplitude_au",
                "give the pulse strength once, as either energy or amplitude_au",
            ))
        }
        (Some(e), None) => PulseInput::Energy(positive(src, "pulse", "energy", e)?),
        (None, Some(a)) => {
            if !a.is_finite() {
                return Err(src.invalid("pulse", "amplitude_au", "must be finite"));
            }
            PulseInput::AmplitudeAu(a)
        }
        (None, None) => PulseInput::Energy(1.0),
    };
    let tau_ns = positive(src, "pulse", "tau_ns", p.tau_ns.unwrap_or(5.0))?;
    let carrier_ghz = match p.carrier_ghz {
        Some(c) => Some(positive(src, "pulse", "carrier_ghz", c)?),
        None => None,
    };

    let em = doc.emission.unwrap_or_default();
    let default_rate = if field_free { 0.0 } else { 10.0 };
    let g3_mhz = non_negative(src, "emission", "g3_mhz", em.g3_mhz.unwrap_or(default_rate))?;
    let g12_mhz = non_negative(src, "emission", "g12_mhz", em.g12_mhz.unwrap_or(default_rate))?;

    let h = doc.heom.unwrap_or_default();
    let stiff_factor = match (h.stiff_elimination.unwrap_or(true), h.stiff_factor) {
        (false, Some(_)) => {
            return Err(src.invalid("heom", "stiff_factor", "has no effect with stiff_elimination = false"))
        }
        (false, None) => None,
        (true, f) => Some(positive(src, "heom", "stiff_factor", f.unwrap_or(100.0))?),
    };
    let budget = h.budget.unwrap_or(qheom::hierarchy::DEFAULT_BUDGET);
    if budget == 0 {
        return Err(src.invalid("heom", "budget", "must be at least 1"));
    }
    let level = h.level.unwrap_or(4);

    let ig = doc.integrator.unwrap_or_default();
    let dc = StepControl::default();
    let integrator = IntegratorSettings {
        rel_tol: positive(src, "integrator", "rel_tol", ig.rel_tol.unwrap_or(dc.rel_tol))?,
        abs_tol: non_negative(src, "integrator", "abs_tol", ig.abs_tol.unwrap_or(dc.abs_tol))?,
        initial_step_ns: positive(
            src,
            "integrator",
            "initial_step_ns",
            ig.initial_step_ns.unwrap_or(DEFAULT_INITIAL_STEP_NS),
        )?,
        max_step_ns: match ig.max_step_ns {
            Some(m) if m == f64::INFINITY => None,
            Some(m) => Some(positive(src, "integrator", "max_step_ns", m)?),
            None => None,
        },
        min_step_fraction: positive(
            src,
            "integrator",
            "min_step_fraction",
            ig.min_step_fraction.unwrap_or(dc.min_step_fraction),
        )?,
        safety: positive(src, "integrator", "safety", ig.safety.unwrap_or(dc.safety))?,
        max_growth: positive(src, "integrator", "max_growth", ig.max_growth.unwrap_or(dc.max_growth))?,
        min_shrink: positive(src, "integrator", "min_shrink", ig.min_shrink.unwrap_or(dc.min_shrink))?,
    };
    if integrator.safety >= 1.0 {
        return Err(src.invalid("integrator", "safety", "must be below 1"));
    }
    if integrator.min_shrink >= 1.0 || integrator.max_growth <= 1.0 {
        return Err(src.invalid(
            "integrator",
            "max_growth",
            "need min_shrink < 1 < max_growth",
        ));
    }

    let r = doc.run.unwrap_or_default();
    let t_final_ns = positive(src, "run", "t_final_ns", r.t_final_ns.unwrap_or(if field_free { 100.0 } else { 500.0 }))?;
    let output_interval_ns = positive(src, "run", "output_interval_ns", r.output_interval_ns.unwrap_or(0.5))?;
    let steps = t_final_ns / output_interval_ns;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return Err(src.invalid(
            "run",
            "output_interval_ns",
            format!("must divide t_final_ns = {t_final_ns} into whole steps"),
        ));
    }
    let initial_state = match r.initial_state {
        Some(s) => s
            .parse::<StateLabel>()
            .map_err(|_| src.invalid("run", "initial_state", format!("unknown state `{s}`; expected one of g, Dm, Dp, B, De, Bem, Bep, top")))?,
        None if field_free => StateLabel::B,
        None => StateLabel::G,
    };

    let sc = doc.scan.unwrap_or_default();
    let scan_energies = sc.energies.unwrap_or_else(|| qheom::simulation::DEFAULT_SCAN_ENERGIES.to_vec());
    let scan_taus_ns = sc.taus_ns.unwrap_or_else(|| qheom::simulation::DEFAULT_SCAN_TAUS.to_vec());
    for (key, list) in [("energies", &scan_energies), ("taus_ns", &scan_taus_ns)] {
        if list.is_empty() {
            return Err(src.invalid("scan", key, "must not be empty"));
        }
        for &v in list.iter() {
            positive(src, "scan", key, v)?;
        }
    }

    let cv = doc.convergence.unwrap_or_default();
    let convergence_levels = cv.levels.unwrap_or_else(|| vec![level, level + 1]);
    let convergence_matsubara = cv.n_matsubara.unwrap_or_else(|| vec![bath.n_matsubara]);
    if convergence_levels.is_empty() {
        return Err(src.invalid("convergence", "levels", "must not be empty"));
    }
    if convergence_matsubara.is_empty() {
        return Err(src.invalid("convergence", "n_matsubara", "must not be empty"));
    }

    let o = doc.output.unwrap_or_default();
    let output = OutputSettings {
        dir: o.dir.unwrap_or_else(|| PathBuf::from("out")),
        reports: o.reports.unwrap_or(true),
        checkpoint_interval_ns: match o.checkpoint_interval_ns {
            Some(c) => Some(positive(src, "output", "checkpoint_interval_ns", c)?),
            None => None,
        },
    };

    let config = RunConfig {
        mode,
        network,
        bath_enabled: b.enabled.unwrap_or(true),
        bath_preset,
        bath,
        pulse_enabled: p.enabled.unwrap_or(!field_free),
        pulse,
        tau_ns,
        carrier_ghz,
        g3_mhz,
        g12_mhz,
        level,
        scaled_ados: h.scaled_ados.unwrap_or(true),
        renormalization: h.renormalization.unwrap_or(true),
        stiff_factor,
        parallel: h.parallel.unwrap_or(false),
        budget,
        frame: h.frame.unwrap_or(Frame::Rotating),
        integrator,
        t_final_ns,
        output_interval_ns,
        initial_state,
        scan_energies,
        scan_taus_ns,
        scan_parallel: sc.parallel.unwrap_or(true),
        convergence_levels,
        convergence_matsubara,
        output,
    };
    // Whatever the model layer still objects to.
    config.simulation().validate().map_err(|e| ConfigError::Invalid {
        location: src.name.to_string(),
        key: "(model)".into(),
        message: e.to_string(),
    })?;
    Ok(config)
}

fn check_coupling(src: &Source, key: &str, j: [[f64; 3]; 3]) -> Result<[[f64; 3]; 3], ConfigError> {
    let mut problems = Vec::new();
    for a in 0..3 {
        if j[a][a] != 0.0 {
            problems.push(format!("diagonal entry {key}[{a}][{a}] = {} must be 0", j[a][a]));
        }
        for b in (a + 1)..3 {
            if !(j[a][b].is_finite() && j[b][a].is_finite()) {
                problems.push(format!("{key}[{a}][{b}] and {key}[{b}][{a}] must be finite"));
            } else if j[a][b] != j[b][a] {
                problems.push(format!(
                    "{key}[{a}][{b}] = {} differs from {key}[{b}][{a}] = {}",
                    j[a][b], j[b][a]
                ));
            }
        }
    }
    if problems.is_empty() {
        Ok(j)
    } else {
        Err(src.invalid("network", key, format!("matrix must be symmetric: {}", problems.join("; "))))
    }
}

impl RunConfig {
    /// Configuration of a default run in `mode`.
    pub fn defaults(mode: Mode) -> RunConfig {
        let text = format!("mode = \"{}\"\n", mode.name());
        parse_config(&text, "<defaults>").expect("defaults are valid")
    }

    /// The model configuration, in atomic units.
    pub fn simulation(&self) -> SimulationConfig {
        let it = &self.integrator;
        SimulationConfig {
            network: self.network.clone(),
            bath: self.bath_enabled.then(|| self.bath.clone()),
            pulse: self.pulse_enabled.then(|| PulseSettings {
                strength: match self.pulse {
                    PulseInput::Energy(e) => PulseStrength::Energy(e * units::PULSE_ENERGY_UNIT),
                    PulseInput::AmplitudeAu(a) => PulseStrength::Amplitude(a),
                },
                tau_ns: self.tau_ns,
                carrier_ghz: self.carrier_ghz,
            }),
            g3_mhz: self.g3_mhz,
            g12_mhz: self.g12_mhz,
            level: self.level,
            scaled_ados: self.scaled_ados,
            renormalization: self.renormalization,
            stiff_factor: self.stiff_factor,
            parallel: self.parallel,
            budget: self.budget,
            frame: self.frame,
            control: StepControl {
                rel_tol: it.rel_tol,
                abs_tol: it.abs_tol,
                initial_step: units::ns_to_au(it.initial_step_ns),
                max_step: it.max_step_ns.map_or(f64::INFINITY, units::ns_to_au),
                min_step_fraction: it.min_step_fraction,
                safety: it.safety,
                max_growth: it.max_growth,
                min_shrink: it.min_shrink,
            },
            t_final_ns: self.t_final_ns,
            output_interval_ns: self.output_interval_ns,
            initial: self.initial_state,
        }
    }

    /// Convergence settings as (level, Matsubara count) pairs, level-major.
    pub fn convergence_settings(&self) -> Vec<(usize, usize)> {
        self.convergence_levels
            .iter()
            .flat_map(|&l| self.convergence_matsubara.iter().map(move |&m| (l, m)))
            .collect()
    }

    fn document(&self) -> Document {
        let SpectralDensityParams {
            p,
            omega1,
            gamma1,
            omega2,
            gamma2,
        } = self.bath.params;
        let it = &self.integrator;
        Document {
            mode: Some(self.mode),
            network: Some(NetworkSection {
                omega_ghz: Some(self.network.omega_ghz),
                coupling_ghz: Some(self.network.coupling_ghz),
                coupling_mhz: None,
                dipole_sites: Some(self.network.dipole_sites.clone()),
                dipole_moment_au: Some(self.network.dipole_moment),
                noise_site: Some(self.network.noise_site),
            }),
            bath: Some(BathSection {
                enabled: Some(self.bath_enabled),
                preset: Some(self.bath_preset),
                temperature_k: Some(self.bath.temperature),
                n_matsubara: Some(self.bath.n_matsubara),
                eta_target: self.bath.eta_target,
                p_au: self.bath.eta_target.is_none().then_some(p),
                omega1_au: Some(omega1),
                gamma1_au: Some(gamma1),
                omega2_au: Some(omega2),
                gamma2_au: Some(gamma2),
            }),
            pulse: Some(PulseSection {
                enabled: Some(self.pulse_enabled),
                energy: match self.pulse {
                    PulseInput::Energy(e) => Some(e),
                    PulseInput::AmplitudeAu(_) => None,
                },
                amplitude_au: match self.pulse {
                    PulseInput::AmplitudeAu(a) => Some(a),
                    PulseInput::Energy(_) => None,
                },
                tau_ns: Some(self.tau_ns),
                carrier_ghz: self.carrier_ghz,
            }),
            emission: Some(EmissionSection {
                g3_mhz: Some(self.g3_mhz),
                g12_mhz: Some(self.g12_mhz),
            }),
            heom: Some(HeomSection {
                level: Some(self.level),
                scaled_ados: Some(self.scaled_ados),
                renormalization: Some(self.renormalization),
                stiff_elimination: Some(self.stiff_factor.is_some()),
                stiff_factor: self.stiff_factor,
                parallel: Some(self.parallel),
                budget: Some(self.budget),
                frame: Some(self.frame),
            }),
            integrator: Some(IntegratorSection {
                rel_tol: Some(it.rel_tol),
                abs_tol: Some(it.abs_tol),
                initial_step_ns: Some(it.initial_step_ns),
                max_step_ns: it.max_step_ns,
                min_step_fraction: Some(it.min_step_fraction),
                safety: Some(it.safety),
                max_growth: Some(it.max_growth),
                min_shrink: Some(it.min_shrink),
            }),
            run: Some(RunSection {
                t_final_ns: Some(self.t_final_ns),
                output_interval_ns: Some(self.output_interval_ns),
                initial_state: Some(self.initial_state.short().to_string()),
            }),
            scan: Some(ScanSection {
                energies: Some(self.scan_energies.clone()),
                taus_ns: Some(self.scan_taus_ns.clone()),
                parallel: Some(self.scan_parallel),
            }),
            convergence: Some(ConvergenceSection {
                levels: Some(self.convergence_levels.clone()),
                n_matsubara: Some(self.convergence_matsubara.clone()),
            }),
            output: Some(OutputSection {
                dir: Some(self.output.dir.clone()),
                reports: Some(self.output.reports),
                checkpoint_interval_ns: self.output.checkpoint_interval_ns,
            }),
        }
    }

    /// Every setting written out explicitly, in the configuration grammar.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.document()).expect("configuration serializes")
    }
}
