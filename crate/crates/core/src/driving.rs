//! Sine-squared microwave pulse E(t) = A sin²(πt/τ) cos(ω t) on [0, τ].

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

/// Carrier cycles per pulse below which the pulse counts as few-cycle.
pub const MANY_CYCLE_THRESHOLD: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    /// Peak field A, a.u.
    pub amplitude: f64,
    /// Duration τ_max, a.u. of time.
    pub tau_max: f64,
    /// Carrier angular frequency, a.u.
    pub carrier: f64,
}

impl Pulse {
    pub fn new(amplitude: f64, tau_max: f64, carrier: f64) -> Result<Pulse> {
        if !(tau_max.is_finite() && tau_max > 0.0) {
            return Err(Error::Pulse(format!("duration must be positive, got {tau_max}")));
        }
        if !(carrier.is_finite() && carrier > 0.0) {
            return Err(Error::Pulse(format!("carrier must be positive, got {carrier}")));
        }
        if !amplitude.is_finite() {
            return Err(Error::Pulse("amplitude must be finite".into()));
        }
        Ok(Pulse {
            amplitude,
            tau_max,
            carrier,
        })
    }

    /// Pulse whose integrated intensity equals `energy`.
    pub fn with_energy(energy: f64, tau_max: f64, carrier: f64) -> Result<Pulse> {
        let a = amplitude_for_energy(energy, tau_max, carrier)?;
        Pulse::new(a, tau_max, carrier)
    }

    /// sin²(πt/τ) inside the support, zero outside.
    #[inline]
    pub fn envelope(&self, t: f64) -> f64 {
        if !(0.0..=self.tau_max).contains(&t) {
            return 0.0;
        }
        let s = (PI * t / self.tau_max).sin();
        s * s
    }

    /// Energy from the closed-form integral of E².
    pub fn energy(&self) -> f64 {
        self.amplitude * self.amplitude * sin4_cos2_integral(self.tau_max, self.carrier)
    }

    pub fn is_many_cycle(&self) -> bool {
        self.carrier * self.tau_max / (2.0 * PI) >= MANY_CYCLE_THRESHOLD
    }
}

#[inline]
pub fn field_value(t: f64, pulse: &Pulse) -> f64 {
    let env = pulse.envelope(t);
    if env == 0.0 {
        return 0.0;
    }
    pulse.amplitude * env * (pulse.carrier * t).cos()
}

/// ∫₀^a cos(k t) dt.
fn cos_integral(k: f64, a: f64) -> f64 {
    if (k * a).abs() < 1e-8 {
        a
    } else {
        (k * a).sin() / k
    }
}

/// ∫₀^τ sin⁴(πt/τ) cos²(ωt) dt, exactly.
///
/// Uses sin⁴x = 3/8 − cos(2x)/2 + cos(4x)/8 and cos²y = (1 + cos 2y)/2; the
/// slowly varying part gives 3τ/16 and the carrier part decays as 1/(ωτ).
pub fn sin4_cos2_integral(tau: f64, omega: f64) -> f64 {
    let k = PI / tau;
    let w2 = 2.0 * omega;
    let carrier_part = 3.0 / 8.0 * cos_integral(w2, tau)
        - 0.25 * (cos_integral(w2 - 2.0 * k, tau) + cos_integral(w2 + 2.0 * k, tau))
        + 1.0 / 16.0 * (cos_integral(w2 - 4.0 * k, tau) + cos_integral(w2 + 4.0 * k, tau));
    3.0 * tau / 16.0 + 0.5 * carrier_part
}

/// Peak amplitude A giving ∫₀^τ E² dt = energy.
pub fn amplitude_for_energy(energy: f64, tau_max: f64, carrier: f64) -> Result<f64> {
    if !(energy.is_finite() && energy > 0.0) {
        return Err(Error::Pulse(format!("energy must be positive, got {energy}")));
    }
    if !(tau_max.is_finite() && tau_max > 0.0) {
        return Err(Error::Pulse(format!("duration must be positive, got {tau_max}")));
    }
    if !(carrier.is_finite() && carrier > 0.0) {
        return Err(Error::Pulse(format!("carrier must be positive, got {carrier}")));
    }
    Ok((energy / sin4_cos2_integral(tau_max, carrier)).sqrt())
}

/// ∫₀^τ E²(t) dt by adaptive quadrature.
pub fn pulse_energy(pulse: &Pulse) -> Result<f64> {
    if pulse.amplitude == 0.0 {
        return Ok(0.0);
    }
    // A few carrier periods per initial panel keeps the refinement local.
    let period = 2.0 * PI / pulse.carrier;
    let panels = ((pulse.tau_max / (4.0 * period)).ceil() as usize).clamp(1, 100_000);
    let pts: Vec<f64> = (0..=panels)
        .map(|i| pulse.tau_max * i as f64 / panels as f64)
        .collect();
    let tol = Tolerance {
        abs: 0.0,
        rel: 1e-12,
        max_intervals: 50 * panels + 1000,
    };
    let f = |t: f64| {
        let e = field_value(t, pulse);
        C64::new(e * e, 0.0)
    };
    Ok(quadrature::integrate_with_points(f, &pts, tol)?.re)
}
