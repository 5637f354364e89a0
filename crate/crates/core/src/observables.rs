//! Quantities read off the system density matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heom::EmissionRates;
use crate::linalg::Mat8;
use crate::network::{EigenStructure, StateLabel, SystemOperators};
use crate::units;

/// ⟨i|ρ|i⟩ for every eigenstate, in `StateLabel::ALL` order.
pub fn eigen_projection(rho: &Mat8, eig: &EigenStructure) -> [f64; 8] {
    StateLabel::ALL.map(|l| {
        let v = eig.vector(l);
        rho.sandwich(v, v).re
    })
}

/// |⟨a|ρ|b⟩| between two eigenstates.
pub fn abs_coherence(rho: &Mat8, eig: &EigenStructure, a: StateLabel, b: StateLabel) -> f64 {
    rho.sandwich(eig.vector(a), eig.vector(b)).norm()
}

/// Instantaneous photon fluxes (G₃⟨d₃⁺d₃⁻⟩, G₁₂⟨d₁₂⁺d₁₂⁻⟩) in a.u. of
/// inverse time.
pub fn emission_fluxes(rho: &Mat8, ops: &SystemOperators, rates: &EmissionRates) -> (f64, f64) {
    let occ = |d: &Mat8| (d.dagger() * *d).trace_product(rho).re;
    (rates.resonator * occ(&ops.lower_res), rates.waveguide * occ(&ops.lower_guide))
}

/// R = P_res / (P_res + P_loss).
pub fn efficiency_ratio(p_res: f64, p_loss: f64) -> Result<f64> {
    let total = p_res + p_loss;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::UndefinedRatio);
    }
    Ok(p_res / total)
}

/// Smallest eigenvalue of the Hermitian part of ρ.
pub fn min_eigenvalue(rho: &Mat8) -> f64 {
    let h = (*rho + rho.dagger()).scale(num_complex::Complex64::new(0.5, 0.0));
    h.hermitian_eigenvalues()[0]
}

/// One row of a trajectory, in output units (ns, ns⁻¹).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t_ns: f64,
    pub pop_g: f64,
    #[serde(rename = "pop_Dm")]
    pub pop_dm: f64,
    #[serde(rename = "pop_Dp")]
    pub pop_dp: f64,
    #[serde(rename = "pop_B")]
    pub pop_b: f64,
    #[serde(rename = "pop_De")]
    pub pop_de: f64,
    #[serde(rename = "pop_Bem")]
    pub pop_bem: f64,
    #[serde(rename = "pop_Bep")]
    pub pop_bep: f64,
    #[serde(rename = "abs_coh_DmDp")]
    pub abs_coh_dm_dp: f64,
    #[serde(rename = "abs_coh_BemBep")]
    pub abs_coh_bem_bep: f64,
    #[serde(rename = "pop_Q3")]
    pub pop_q3: f64,
    pub flux_res: f64,
    pub flux_loss: f64,
    #[serde(rename = "P_res")]
    pub p_res: f64,
    #[serde(rename = "P_loss")]
    pub p_loss: f64,
}

impl TrajectoryRecord {
    /// Record at time `t` (a.u.) with the emitted totals accumulated so far.
    pub fn from_state(
        t: f64,
        rho: &Mat8,
        eig: &EigenStructure,
        ops: &SystemOperators,
        rates: &EmissionRates,
        emitted: (f64, f64),
    ) -> TrajectoryRecord {
        let pop = eigen_projection(rho, eig);
        let (f_res, f_loss) = emission_fluxes(rho, ops, rates);
        let per_ns = units::ns_to_au(1.0);
        TrajectoryRecord {
            t_ns: units::au_to_ns(t),
            pop_g: pop[0],
            pop_dm: pop[1],
            pop_dp: pop[2],
            pop_b: pop[3],
            pop_de: pop[4],
            pop_bem: pop[5],
            pop_bep: pop[6],
            abs_coh_dm_dp: abs_coherence(rho, eig, StateLabel::DMinus, StateLabel::DPlus),
            abs_coh_bem_bep: abs_coherence(rho, eig, StateLabel::BeMinus, StateLabel::BePlus),
            pop_q3: ops.site_number[2].trace_product(rho).re,
            flux_res: f_res * per_ns,
            flux_loss: f_loss * per_ns,
            p_res: emitted.0,
            p_loss: emitted.1,
        }
    }

    /// Population of a labelled eigenstate.
    pub fn population(&self, label: StateLabel) -> f64 {
        match label {
            StateLabel::G => self.pop_g,
            StateLabel::DMinus => self.pop_dm,
            StateLabel::DPlus => self.pop_dp,
            StateLabel::B => self.pop_b,
            StateLabel::De => self.pop_de,
            StateLabel::BeMinus => self.pop_bem,
            StateLabel::BePlus => self.pop_bep,
            StateLabel::Top => 1.0 - self.populations_without_top(),
        }
    }

    fn populations_without_top(&self) -> f64 {
        self.pop_g + self.pop_dm + self.pop_dp + self.pop_b + self.pop_de + self.pop_bem + self.pop_bep
    }
}

/// Running trapezoid integral of the two fluxes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FluxIntegral {
    pub p_res: f64,
    pub p_loss: f64,
    /// Time (a.u.) and fluxes (a.u.) at the previous sample.
    pub last: Option<(f64, f64, f64)>,
}

impl FluxIntegral {
    pub fn add_sample(&mut self, t: f64, flux_res: f64, flux_loss: f64) {
        if let Some((t0, r0, l0)) = self.last {
            let dt = t - t0;
            self.p_res += 0.5 * dt * (r0 + flux_res);
            self.p_loss += 0.5 * dt * (l0 + flux_loss);
        }
        self.last = Some((t, flux_res, flux_loss));
    }

    pub fn ratio(&self) -> Result<f64> {
        efficiency_ratio(self.p_res, self.p_loss)
    }
}

/// Largest deviations from a physical density matrix seen along a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl Diagnostics {
    pub fn observe(&mut self, rho: &Mat8) {
        self.max_trace_error = self.max_trace_error.max((rho.trace().re - 1.0).abs().max(rho.trace().im.abs()));
        self.max_hermiticity_error = self.max_hermiticity_error.max(rho.hermiticity_error());
        self.min_eigenvalue = self.min_eigenvalue.min(min_eigenvalue(rho));
    }
}
