//! Unit conversions between laboratory units and Hartree atomic units.
//!
//! All quoted frequencies are ordinary frequencies ν; internally every
//! frequency is an angular frequency ω = 2πν expressed in atomic units
//! (ħ = 1). Emission rates are plain decay rates (no 2π).

use std::f64::consts::PI;

/// One atomic unit of angular frequency in rad/s.
pub const AU_ANGULAR_FREQUENCY: f64 = 4.134_137_333_518e16;

/// One atomic unit of time in seconds.
pub const AU_TIME: f64 = 1.0 / AU_ANGULAR_FREQUENCY;

/// Boltzmann constant in Hartree per Kelvin.
pub const BOLTZMANN_HARTREE_PER_K: f64 = 3.166_811_563e-6;

/// Pulse energies are quoted in units of 1e-8 hartree (atomic units).
pub const PULSE_ENERGY_UNIT: f64 = 1e-8;

/// Ordinary frequency in GHz to angular frequency in a.u.
pub fn ghz_to_au(ghz: f64) -> f64 {
    2.0 * PI * ghz * 1e9 / AU_ANGULAR_FREQUENCY
}

/// Angular frequency in a.u. to ordinary frequency in GHz.
pub fn au_to_ghz(omega: f64) -> f64 {
    omega * AU_ANGULAR_FREQUENCY / (2.0 * PI * 1e9)
}

pub fn ns_to_au(ns: f64) -> f64 {
    ns * 1e-9 / AU_TIME
}

pub fn au_to_ns(t: f64) -> f64 {
    t * AU_TIME * 1e9
}

/// Decay rate in MHz (1e6 per second) to a.u. of inverse time.
pub fn mhz_rate_to_au(mhz: f64) -> f64 {
    mhz * 1e6 * AU_TIME
}

pub fn au_rate_to_mhz(rate: f64) -> f64 {
    rate / (1e6 * AU_TIME)
}

/// Thermal energy k_B T in hartree.
pub fn thermal_energy(kelvin: f64) -> f64 {
    BOLTZMANN_HARTREE_PER_K * kelvin
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_ghz_matches_the_tabulated_pole() {
        // Ω₂ of the spectral density sits on the 1 GHz bright-dark gap.
        let omega = ghz_to_au(1.0);
        assert!((omega / 1.5222e-7 - 1.0).abs() < 2e-3);
    }

    #[test]
    fn conversions_invert() {
        assert!((au_to_ghz(ghz_to_au(12.5)) - 12.5).abs() < 1e-12);
        assert!((au_to_ns(ns_to_au(500.0)) - 500.0).abs() < 1e-9);
        assert!((au_rate_to_mhz(mhz_rate_to_au(10.0)) - 10.0).abs() < 1e-12);
    }
}
