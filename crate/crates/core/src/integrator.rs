//! Adaptive Cash–Karp Runge–Kutta 4(5) for complex state vectors.
//!
//! The fifth-order solution is propagated; the embedded fourth-order one only
//! feeds the error estimate. Steps are shortened to land exactly on output
//! times and breakpoints, and the unclamped step is restored afterwards so
//! the output grid does not throttle the controller.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-hand side of dy/dt = f(t, y).
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]);
}

impl OdeSystem for crate::heom::HeomSystem {
    fn dim(&self) -> usize {
        crate::heom::HeomSystem::dim(self)
    }

    fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        crate::heom::HeomSystem::rhs(self, t, y, dy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    /// Infinite by default; JSON has no infinity, so it is written as null.
    #[serde(deserialize_with = "unbounded_from_null")]
    pub max_step: f64,
    /// Smallest step relative to |t| before the run is abandoned.
    pub min_step_fraction: f64,
    pub safety: f64,
    pub max_growth: f64,
    pub min_shrink: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rel_tol: 1e-7,
            abs_tol: 1e-10,
            initial_step: crate::units::ns_to_au(2.5e-3),
            max_step: f64::INFINITY,
            min_step_fraction: 1e-13,
            safety: 0.9,
            max_growth: 5.0,
            min_shrink: 0.2,
        }
    }
}

fn unbounded_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rel_tol", self.rel_tol),
            ("initial_step", self.initial_step),
            ("max_step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::Integrator(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.abs_tol >= 0.0) {
            return Err(Error::Integrator(format!("abs_tol must be non-negative, got {}", self.abs_tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

const C: [f64; 6] = [0.0, 0.2, 0.3, 0.6, 1.0, 0.875];
const A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.2, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [0.3, -0.9, 1.2, 0.0, 0.0],
    [-11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
const B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    0.25,
];

/// Integrator state that survives across calls, so a run can be split into
/// pieces (or checkpointed) without restarting the step-size history.
pub struct CashKarp {
    control: StepControl,
    k: [Vec<C64>; 6],
    stage: Vec<C64>,
    y_new: Vec<C64>,
    /// Time at which k[0] holds f(t, y) for the current y.
    k0_at: Option<f64>,
    /// Step size the controller proposes next.
    pub next_step: f64,
    pub stats: StepStats,
}

impl CashKarp {
    pub fn new(dim: usize, control: StepControl) -> Result<CashKarp> {
        control.validate()?;
        let z = C64::new(0.0, 0.0);
        Ok(CashKarp {
            next_step: control.initial_step.min(control.max_step),
            control,
            k0_at: None,
            k: std::array::from_fn(|_| vec![z; dim]),
            stage: vec![z; dim],
            y_new: vec![z; dim],
            stats: StepStats::default(),
        })
    }

    pub fn control(&self) -> &StepControl {
        &self.control
    }

    pub fn set_max_step(&mut self, max_step: f64) {
        self.control.max_step = max_step;
    }

    /// One trial step of size h; fills `y_new` and returns the scaled error.
    fn trial<S: OdeSystem + ?Sized>(&mut self, sys: &S, t: f64, y: &[C64], h: f64) -> f64 {
        let n = y.len();
        for s in 0..6 {
            if s == 0 {
                if self.k0_at != Some(t) {
                    sys.rhs(t, y, &mut self.k[0]);
                    self.stats.rhs_evaluations += 1;
                    self.k0_at = Some(t);
                }
                continue;
            }
            for i in 0..n {
                let mut acc = y[i];
                for (j, &a) in A[s][..s].iter().enumerate() {
                    if a != 0.0 {
                        acc += self.k[j][i] * (h * a);
                    }
                }
                self.stage[i] = acc;
            }
            let (_, tail) = self.k.split_at_mut(s);
            sys.rhs(t + C[s] * h, &self.stage, &mut tail[0]);
            self.stats.rhs_evaluations += 1;
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut y5 = y[i];
            let mut e = C64::new(0.0, 0.0);
            for s in 0..6 {
                y5 += self.k[s][i] * (h * B5[s]);
                e += self.k[s][i] * (h * (B5[s] - B4[s]));
            }
            self.y_new[i] = y5;
            let scale = self.control.abs_tol + self.control.rel_tol * y[i].norm().max(y5.norm());
            let r = e.norm() / scale;
            // f64::max drops NaN, so test for it explicitly.
            if !r.is_finite() {
                return f64::NAN;
            }
            err = err.max(r);
        }
        err
    }

    /// Advances y from t through every time in `stops` (ascending), landing
    /// on each exactly and calling `observer` there. Stops at or before t
    /// are skipped.
    pub fn integrate<S, F>(
        &mut self,
        sys: &S,
        t: &mut f64,
        y: &mut [C64],
        stops: &[f64],
        mut observer: F,
    ) -> Result<()>
    where
        S: OdeSystem + ?Sized,
        F: FnMut(f64, &[C64]) -> Result<()>,
    {
        if y.len() != sys.dim() {
            return Err(Error::Integrator(format!(
                "state has length {}, system expects {}",
                y.len(),
                sys.dim()
            )));
        }
        self.k0_at = None;
        for &stop in stops {
            if stop <= *t {
                continue;
            }
            while *t < stop {
                let remaining = stop - *t;
                if remaining <= self.control.min_step_fraction * stop.abs() {
                    // Rounding-level gap between nearly coincident stops.
                    *t = stop;
                    break;
                }
                let proposed = self.next_step.min(self.control.max_step);
                // Avoid leaving a sliver: take the rest if within 1% of it.
                let clamped = proposed >= remaining * 0.99;
                let h = if clamped { remaining } else { proposed };
                let min_step = self.control.min_step_fraction * t.abs().max(stop.abs());
                if h <= min_step {
                    return Err(Error::StepUnderflow {
                        t: *t,
                        step: h,
                        error: None,
                    });
                }
                let mut err = self.trial(sys, *t, y, h);
                if err.is_nan() {
                    let bad = |z: &C64| !z.re.is_finite() || !z.im.is_finite();
                    // A blow-up that starts from a finite state and a finite
                    // slope is just a step that was far too large.
                    let at = y.iter().position(bad).or_else(|| self.k[0].iter().position(bad));
                    if let Some(at) = at {
                        return Err(Error::NonFinite {
                            t: *t,
                            ado: at / crate::linalg::DIM2,
                        });
                    }
                    err = f64::INFINITY;
                }
                if err <= 1.0 {
                    *t = if clamped { stop } else { *t + h };
                    y.copy_from_slice(&self.y_new);
                    self.stats.accepted += 1;
                    let factor = if err == 0.0 {
                        self.control.max_growth
                    } else {
                        (self.control.safety * err.powf(-0.2)).clamp(self.control.min_shrink, self.control.max_growth)
                    };
                    let grown = h * factor;
                    // A clamped step says nothing about how large the next
                    // one may be, so never shrink below the old proposal.
                    self.next_step = if clamped { grown.max(proposed) } else { grown };
                } else {
                    self.stats.rejected += 1;
                    let factor = (self.control.safety * err.powf(-0.25)).clamp(self.control.min_shrink, 1.0);
                    self.next_step = h * factor;
                    if self.next_step <= min_step {
                        return Err(Error::StepUnderflow {
                            t: *t,
                            step: self.next_step,
                            error: Some(err),
                        });
                    }
                }
            }
            observer(*t, y)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// dy/dt = λ y, component-wise.
    struct Linear(Vec<C64>);

    impl OdeSystem for Linear {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn rhs(&self, _t: f64, y: &[C64], dy: &mut [C64]) {
            for i in 0..y.len() {
                dy[i] = self.0[i] * y[i];
            }
        }
    }

    /// dy/dt = cos(t) y, solved by exp(sin t).
    struct Forced;

    impl OdeSystem for Forced {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
            dy[0] = y[0] * t.cos();
        }
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (1..=n).map(|i| i as f64 * dt).collect()
    }

    #[test]
    fn decay_and_rotation_match_exponentials() {
        let lambda = vec![C64::new(-0.5, 0.0), C64::new(0.0, 3.0), C64::new(-0.1, -2.0)];
        let sys = Linear(lambda.clone());
        let mut y = vec![C64::new(1.0, 0.0); 3];
        let mut t = 0.0;
        let control = StepControl {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            initial_step: 1e-3,
            ..StepControl::default()
        };
        let mut ck = CashKarp::new(3, control).unwrap();
        let mut worst: f64 = 0.0;
        ck.integrate(&sys, &mut t, &mut y, &grid(20, 0.5), |t, y| {
            for i in 0..3 {
                worst = worst.max((y[i] - (lambda[i] * t).exp()).norm());
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(t, 10.0);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn lands_exactly_on_stops() {
        let mut seen = Vec::new();
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut t = 0.0;
        let stops = vec![0.1, 0.25, 1.0, 1.0 + 1e-9, 7.3];
        let mut ck = CashKarp::new(1, StepControl::default()).unwrap();
        ck.integrate(&Forced, &mut t, &mut y, &stops, |t, y| {
            seen.push(t);
            assert!((y[0].re - t.sin().exp()).abs() < 1e-6);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, stops);
    }

    #[test]
    fn split_run_matches_single_run() {
        let stops = grid(40, 0.25);
        let run = |pieces: &[&[f64]]| {
            let mut y = vec![C64::new(1.0, 0.0)];
            let mut t = 0.0;
            let mut ck = CashKarp::new(1, StepControl::default()).unwrap();
            let mut out = Vec::new();
            for p in pieces {
                ck.integrate(&Forced, &mut t, &mut y, p, |_, y| {
                    out.push(y[0]);
                    Ok(())
                })
                .unwrap();
            }
            out
        };
        let whole = run(&[&stops]);
        let split = run(&[&stops[..17], &stops[17..]]);
        assert_eq!(whole, split);
    }

    #[test]
    fn nan_state_is_reported() {
        let sys = Linear(vec![C64::new(1.0, 0.0); 128]);
        let mut y = vec![C64::new(1.0, 0.0); 128];
        y[70] = C64::new(f64::NAN, 0.0);
        let mut t = 0.0;
        let mut ck = CashKarp::new(128, StepControl::default()).unwrap();
        let err = ck.integrate(&sys, &mut t, &mut y, &[1.0], |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::NonFinite { ado: 1, .. }), "{err}");
        assert!(err.is_integration_failure());
    }

    #[test]
    fn finite_time_blowup_underflows() {
        // y' = y² from y(0) = 1 diverges at t = 1.
        struct Blowup;
        impl OdeSystem for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn rhs(&self, _t: f64, y: &[C64], dy: &mut [C64]) {
                dy[0] = y[0] * y[0];
            }
        }
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut t = 0.0;
        let mut ck = CashKarp::new(1, StepControl::default()).unwrap();
        let err = ck.integrate(&Blowup, &mut t, &mut y, &[2.0], |_, _| Ok(())).unwrap_err();
        assert!(err.is_integration_failure(), "{err} at t = {t}");
        assert!((t - 1.0).abs() < 1e-6, "{err} at t = {t}");
    }

    #[test]
    fn rejects_bad_control() {
        let bad = StepControl {
            rel_tol: 0.0,
            ..StepControl::default()
        };
        assert!(CashKarp::new(1, bad).is_err());
    }
}
