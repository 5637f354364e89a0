//! Four-pole Lorentzian bath: spectral density, Bose statistics, the
//! exponential expansion of the correlation function and calibration helpers.
//!
//! The correlation function is
//!
//! ```text
//! C(t) = (1/π) ∫ dω J(ω) n(ω) e^{iωt}
//! ```
//!
//! Closing the contour in the upper half plane gives one exponential per
//! pole: four from J (at ±Ω_k + iΓ_k) and one per Matsubara frequency
//! ν_m = 2πm k_B T of the Bose function. Each term is α_k e^{iγ_k t} with
//! Im γ_k > 0, so every term decays for t → +∞.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::units;

/// Amplitude of the classical (298 K) parameter set, a.u.
pub const P_CLASSICAL: f64 = 2.7959e-47;
/// Amplitude tabulated for the 0.01 K parameter set, a.u.
pub const P_QUANTUM_TABLE: f64 = 2.7959e-41;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensityParams {
    pub p: f64,
    pub omega1: f64,
    pub gamma1: f64,
    pub omega2: f64,
    pub gamma2: f64,
}

impl Default for SpectralDensityParams {
    fn default() -> Self {
        SpectralDensityParams {
            p: P_CLASSICAL,
            omega1: 3.1892e-8,
            gamma1: 2.1191e-7,
            omega2: 1.5222e-7,
            gamma2: 9.0678e-9,
        }
    }
}

impl SpectralDensityParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("p", self.p),
            ("omega1", self.omega1),
            ("gamma1", self.gamma1),
            ("omega2", self.omega2),
            ("gamma2", self.gamma2),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Bath(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_amplitude(self, p: f64) -> Self {
        SpectralDensityParams { p, ..self }
    }

    /// The eight roots ±Ω_k ± iΓ_k of Λ₁Λ₂, upper-half-plane roots first.
    fn roots(&self) -> [C64; 8] {
        let (o1, g1, o2, g2) = (self.omega1, self.gamma1, self.omega2, self.gamma2);
        [
            C64::new(o1, g1),
            C64::new(-o1, g1),
            C64::new(o2, g2),
            C64::new(-o2, g2),
            C64::new(o1, -g1),
            C64::new(-o1, -g1),
            C64::new(o2, -g2),
            C64::new(-o2, -g2),
        ]
    }

    /// Largest frequency scale of the density.
    fn scale(&self) -> f64 {
        self.omega1.max(self.gamma1).max(self.omega2).max(self.gamma2)
    }
}

/// J(ω) = p ω³ / (Λ₁ Λ₂), odd in ω.
pub fn spectral_density(omega: f64, params: &SpectralDensityParams) -> f64 {
    let lambda = |o: f64, g: f64| ((omega + o).powi(2) + g * g) * ((omega - o).powi(2) + g * g);
    params.p * omega.powi(3) / (lambda(params.omega1, params.gamma1) * lambda(params.omega2, params.gamma2))
}

/// J continued to complex frequency.
pub fn spectral_density_complex(z: C64, params: &SpectralDensityParams) -> C64 {
    let lambda = |o: f64, g: f64| ((z + o).powi(2) + g * g) * ((z - o).powi(2) + g * g);
    params.p * z.powi(3) / (lambda(params.omega1, params.gamma1) * lambda(params.omega2, params.gamma2))
}

/// n(ω) = 1/(e^{βω} − 1), with ω in a.u. and T in Kelvin.
pub fn bose_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::SingularBose);
    }
    let beta = 1.0 / units::thermal_energy(temperature);
    Ok(1.0 / (beta * omega).exp_m1())
}

/// Bose function at complex argument, accurate for small |βz|.
fn bose_complex(z: C64, beta: f64) -> C64 {
    let x = beta * z.re;
    let y = beta * z.im;
    let half = 0.5 * y;
    // e^{x+iy} − 1 without cancellation.
    let re = x.exp_m1() * y.cos() - 2.0 * half.sin() * half.sin();
    let im = x.exp() * y.sin();
    C64::new(1.0, 0.0) / C64::new(re, im)
}

/// Whether the thermal energy exceeds the bath peak frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Classical,
    Quantum,
}

impl Regime {
    pub fn of(params: &SpectralDensityParams, temperature: f64) -> Regime {
        if units::thermal_energy(temperature) >= params.omega2 {
            Regime::Classical
        } else {
            Regime::Quantum
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathConfig {
    pub params: SpectralDensityParams,
    /// Kelvin.
    pub temperature: f64,
    pub n_matsubara: usize,
    /// When set, p is rescaled so that λ/ω_BD equals this value.
    pub eta_target: Option<f64>,
}

impl BathConfig {
    /// Table parameters at 298 K with one Matsubara term.
    pub fn classical() -> Self {
        BathConfig {
            params: SpectralDensityParams::default(),
            temperature: 298.0,
            n_matsubara: 1,
            eta_target: None,
        }
    }

    /// 0.01 K with ten Matsubara terms and η = 0.01.
    pub fn quantum() -> Self {
        BathConfig {
            params: SpectralDensityParams::default().with_amplitude(P_QUANTUM_TABLE),
            temperature: 0.01,
            n_matsubara: 10,
            eta_target: Some(0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Bath(format!("temperature must be positive, got {}", self.temperature)));
        }
        if let Some(eta) = self.eta_target {
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::Bath(format!("eta_target must be positive, got {eta}")));
            }
        }
        Ok(())
    }

    pub fn regime(&self) -> Regime {
        Regime::of(&self.params, self.temperature)
    }

    /// Parameters with p solved from `eta_target`, if set, for the given
    /// bright-dark gap (a.u.).
    pub fn resolved_params(&self, omega_bd: f64) -> Result<SpectralDensityParams> {
        self.validate()?;
        match self.eta_target {
            None => Ok(self.params),
            Some(eta) => amplitude_for_eta(&self.params, eta, omega_bd),
        }
    }
}

/// Rescales p so that λ / ω_BD = eta (λ is linear in p).
pub fn amplitude_for_eta(params: &SpectralDensityParams, eta: f64, omega_bd: f64) -> Result<SpectralDensityParams> {
    let unit = params.with_amplitude(1.0);
    let lambda_unit = reorganization_energy(&unit)?;
    Ok(params.with_amplitude(eta * omega_bd / lambda_unit))
}

/// η = λ / ω_BD.
pub fn eta(params: &SpectralDensityParams, omega_bd: f64) -> Result<f64> {
    Ok(reorganization_energy(params)? / omega_bd)
}

/// One exponential α e^{iγt} of C(t), with the coefficient α̃ of C*(t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerm {
    pub alpha: C64,
    pub alpha_tilde: C64,
    pub gamma: C64,
}

impl ExpansionTerm {
    /// Decay rate Im γ.
    pub fn rate(&self) -> f64 {
        self.gamma.im
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathExpansion {
    /// Four pole terms followed by the Matsubara terms.
    pub terms: Vec<ExpansionTerm>,
    pub temperature: f64,
    pub n_matsubara: usize,
    pub regime: Regime,
    pub params: SpectralDensityParams,
}

impl BathExpansion {
    pub fn n_cor(&self) -> usize {
        self.terms.len()
    }

    /// Σ α_k e^{iγ_k t}.
    pub fn correlation(&self, t: f64) -> C64 {
        self.terms
            .iter()
            .map(|k| k.alpha * (C64::new(0.0, 1.0) * k.gamma * t).exp())
            .sum()
    }

    /// Σ α̃_k e^{iγ_k t}, which equals C*(t).
    pub fn correlation_conj(&self, t: f64) -> C64 {
        self.terms
            .iter()
            .map(|k| k.alpha_tilde * (C64::new(0.0, 1.0) * k.gamma * t).exp())
            .sum()
    }
}

/// Exponential-sum expansion of C(t) for the given (already resolved)
/// parameters.
pub fn expand_correlation(params: &SpectralDensityParams, temperature: f64, n_matsubara: usize) -> Result<BathExpansion> {
    params.validate()?;
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Bath(format!("temperature must be positive, got {temperature}")));
    }
    let kt = units::thermal_energy(temperature);
    let beta = 1.0 / kt;
    let roots = params.roots();

    let mut poles: Vec<C64> = roots[..4].to_vec();
    poles.extend((1..=n_matsubara).map(|m| C64::new(0.0, 2.0 * PI * m as f64 * kt)));
    for i in 0..poles.len() {
        for j in (i + 1)..poles.len() {
            let scale = poles[i].norm().max(poles[j].norm());
            if (poles[i] - poles[j]).norm() <= 1e-12 * scale {
                return Err(Error::DegeneratePoles(i, j));
            }
        }
    }

    let two_i = C64::new(0.0, 2.0);
    let mut alpha = Vec::with_capacity(poles.len());
    for (j, z) in roots[..4].iter().enumerate() {
        let denom: C64 = roots
            .iter()
            .enumerate()
            .filter(|(m, _)| *m != j)
            .map(|(_, r)| z - r)
            .product();
        let residue = params.p * z.powi(3) / denom;
        alpha.push(two_i * residue * bose_complex(*z, beta));
    }
    for z in &poles[4..] {
        alpha.push(two_i * kt * spectral_density_complex(*z, params));
    }

    let mut terms = Vec::with_capacity(poles.len());
    for k in 0..poles.len() {
        let alpha_tilde = match k {
            0 => alpha[1].conj(),
            1 => alpha[0].conj(),
            2 => alpha[3].conj(),
            3 => alpha[2].conj(),
            _ => alpha[k],
        };
        terms.push(ExpansionTerm {
            alpha: alpha[k],
            alpha_tilde,
            gamma: poles[k],
        });
    }
    Ok(BathExpansion {
        terms,
        temperature,
        n_matsubara,
        regime: Regime::of(params, temperature),
        params: *params,
    })
}

/// Expansion of a configuration, resolving η against the given gap.
pub fn expand_config(config: &BathConfig, omega_bd: f64) -> Result<BathExpansion> {
    let params = config.resolved_params(omega_bd)?;
    expand_correlation(&params, config.temperature, config.n_matsubara)
}

/// J(ω) n(ω), continuous through ω = 0.
fn thermal_density(omega: f64, params: &SpectralDensityParams, beta: f64) -> f64 {
    if omega == 0.0 {
        return 0.0;
    }
    spectral_density(omega, params) / (beta * omega).exp_m1()
}

/// Half-width of the symmetric frequency window of the reference integral.
fn reference_cutoff(params: &SpectralDensityParams) -> f64 {
    // The integrand falls as p/ω⁵; at 2000× the pole scale the dropped tail
    // is ~1e-13 of the integral.
    2000.0 * params.scale()
}

/// C(t) by direct adaptive quadrature of the spectral integral.
///
/// Reference implementation for validating [`expand_correlation`]; it is far
/// too slow for propagation.
pub fn correlation_reference(t: f64, params: &SpectralDensityParams, temperature: f64) -> Result<C64> {
    params.validate()?;
    let beta = 1.0 / units::thermal_energy(temperature);
    let w_max = reference_cutoff(params);
    let f = |w: f64| C64::new(0.0, w * t).exp() * thermal_density(w, params, beta);
    let mut pts = vec![0.0, w_max];
    let s = params.scale();
    for x in [
        params.omega1,
        params.omega2,
        params.omega2 - 5.0 * params.gamma2,
        params.omega2 + 5.0 * params.gamma2,
        2.0 * s,
        10.0 * s,
        100.0 * s,
    ] {
        if x > 0.0 && x < w_max {
            pts.push(x);
        }
    }
    let mirrored: Vec<f64> = pts.iter().filter(|&&x| x > 0.0).map(|x| -x).collect();
    pts.extend(mirrored);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-10,
        max_intervals: 50_000,
    };
    Ok(quadrature::integrate_with_points(f, &pts, tol)? / PI)
}

/// λ = (1/π) ∫₀^∞ J(ω)/ω dω.
pub fn reorganization_energy(params: &SpectralDensityParams) -> Result<f64> {
    params.validate()?;
    let f = |w: f64| {
        if w == 0.0 {
            C64::new(0.0, 0.0)
        } else {
            C64::new(spectral_density(w, params) / w, 0.0)
        }
    };
    let breaks = [
        params.omega1,
        params.omega2 - 5.0 * params.gamma2,
        params.omega2,
        params.omega2 + 5.0 * params.gamma2,
    ];
    let v = quadrature::integrate_to_infinity(f, 0.0, &breaks, params.omega2, Tolerance::default())?;
    Ok(v.re / PI)
}

/// 2π|V|² J(ω) [n(ω) + 1].
pub fn golden_rule_rate(v_coupling: f64, omega: f64, params: &SpectralDensityParams, temperature: f64) -> Result<f64> {
    let n = bose_occupation(omega, temperature)?;
    Ok(2.0 * PI * v_coupling * v_coupling * spectral_density(omega, params) * (n + 1.0))
}
