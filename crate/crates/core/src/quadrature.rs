//! Globally adaptive Gauss–Kronrod (7/15) quadrature for complex integrands.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 0.0,
            rel: 1e-10,
            max_intervals: 20_000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kron += pair * WGK[j];
        if j % 2 == 1 {
            gauss += pair * WG[j / 2];
        }
    }
    Segment {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).norm(),
    }
}

/// ∫ f over the consecutive intervals defined by `points` (sorted).
pub fn integrate_with_points<F: Fn(f64) -> C64>(f: F, points: &[f64], tol: Tolerance) -> Result<C64> {
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod(&f, w[0], w[1]));
        }
    }
    let total = |h: &BinaryHeap<Segment>| -> (C64, f64) {
        h.iter().fold((C64::new(0.0, 0.0), 0.0), |(v, e), s| (v + s.value, e + s.error))
    };
    loop {
        let (value, error) = total(&heap);
        let target = tol.abs.max(tol.rel * value.norm());
        if error <= target {
            return Ok(value);
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature { error, tolerance: target });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Quadrature { error, tolerance: target });
        }
        heap.push(kronrod(&f, worst.a, mid));
        heap.push(kronrod(&f, mid, worst.b));
    }
}

pub fn integrate<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<C64> {
    integrate_with_points(f, &[a, b], tol)
}

/// ∫ f over [a, ∞), mapping the tail onto [0, 1) with x = a + s·t/(1 − t).
///
/// `breaks` are interior points of [a, ∞) where f has structure; `scale`
/// sets the width of the mapped tail.
pub fn integrate_to_infinity<F: Fn(f64) -> C64>(
    f: F,
    a: f64,
    breaks: &[f64],
    scale: f64,
    tol: Tolerance,
) -> Result<C64> {
    let g = |t: f64| {
        let one_minus = 1.0 - t;
        let x = a + scale * t / one_minus;
        f(x) * (scale / (one_minus * one_minus))
    };
    let mut pts = vec![0.0];
    for &x in breaks {
        if x > a {
            let u = (x - a) / scale;
            pts.push(u / (1.0 + u));
        }
    }
    pts.push(1.0);
    pts.sort_by(|a, b| a.total_cmp(b));
    integrate_with_points(g, &pts, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> C64 {
        move |x| C64::new(f(x), 0.0)
    }

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(real(|x| x.powi(5) - 3.0 * x * x), -1.0, 2.0, Tolerance::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((v.re - exact).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_integral() {
        let v = integrate(|x: f64| C64::new(0.0, x).exp(), 0.0, 50.0, Tolerance::default()).unwrap();
        let exact = (C64::new(0.0, 50.0).exp() - 1.0) / C64::new(0.0, 1.0);
        assert!((v - exact).norm() < 1e-9);
    }

    #[test]
    fn semi_infinite_lorentzian() {
        let v = integrate_to_infinity(real(|x| 1.0 / (1.0 + x * x)), 0.0, &[], 1.0, Tolerance::default()).unwrap();
        assert!((v.re - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let tol = Tolerance {
            max_intervals: 4,
            ..Tolerance::default()
        };
        let r = integrate(real(|x| (1.0 / x).sin()), 1e-6, 1.0, tol);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
