//! The hierarchy right-hand side.
//!
//! For every index n the auxiliary matrix obeys
//!
//! ```text
//! ρ̇_n = −i[H_S + H_f(t) + H_ren, ρ_n] + i Σ_k n_k γ_k ρ_n
//!       − i [S, Σ_k ρ_{n+e_k}]
//!       − i Σ_k n_k (α_k S ρ_{n−e_k} − α̃_k ρ_{n−e_k} S)
//!       + δ_{n,0} (L_res[ρ_n] + L_guide[ρ_n])
//! ```
//!
//! with couplings beyond the truncation level dropped. S is diagonal in the
//! site basis, so every bath term is an element-wise product.
//!
//! Two transformations keep the propagation cheap without changing the
//! physics:
//!
//! * Scaled matrices σ_n = ρ_n / √(Π_k n_k! |α_k|^{n_k}) keep deep tiers O(1).
//! * The frame rotating with ω_f·N (N the excitation number) removes the
//!   carrier-scale phase of inter-sector coherences. N commutes with H_S, S
//!   and every d₊d₋, so only the drive picks up phases e^{±iω_f t}; no
//!   rotating-wave approximation is made. ω_f = 0 is the lab frame.
//!
//! Expansion terms whose decay rate exceeds `stiff_factor` times the spectral
//! width of H_S (the high-temperature Matsubara terms) are eliminated
//! adiabatically: their first-tier matrix is slaved to its source, which adds
//! −(i/γ)[S, αSρ − α̃ρS] to every matrix.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{BathExpansion, ExpansionTerm};
use crate::driving::{field_value, Pulse};
use crate::error::{Error, Result};
use crate::hierarchy::{enumerate_hierarchy, Hierarchy, DEFAULT_BUDGET};
use crate::linalg::{Mat8, DIM, DIM2};
use crate::network::{excitations, SystemOperators};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Spontaneous-emission channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// Qubit 3 into the resonator.
    Resonator,
    /// Qubits 1 and 2 collectively into the waveguide.
    Waveguide,
}

/// Emission rates G₃ and G₁₂ in a.u. of inverse time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmissionRates {
    pub resonator: f64,
    pub waveguide: f64,
}

impl EmissionRates {
    pub fn scaled(self, factor: f64) -> Self {
        EmissionRates {
            resonator: self.resonator * factor,
            waveguide: self.waveguide * factor,
        }
    }
}

/// (G/2)[2 d ρ d† − d†d ρ − ρ d†d] with d the lowering operator of `channel`.
pub fn lindblad_term(rho: &Mat8, channel: Channel, rate: f64, ops: &SystemOperators) -> Mat8 {
    let lower = match channel {
        Channel::Resonator => &ops.lower_res,
        Channel::Waveguide => &ops.lower_guide,
    };
    lindblad_with(rho, lower, rate)
}

fn lindblad_with(rho: &Mat8, lower: &Mat8, rate: f64) -> Mat8 {
    let raise = lower.dagger();
    let n = raise * *lower;
    let jump = (*lower * *rho * raise).scale(C64::new(2.0, 0.0));
    (jump - n * *rho - *rho * n).scale(C64::new(0.5 * rate, 0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeomOptions {
    /// Truncation level L.
    pub level: usize,
    pub scaled_ados: bool,
    /// Include the λS² counter-term.
    pub renormalization: bool,
    /// Angular frequency of the rotating frame, a.u.; 0 for the lab frame.
    pub frame_omega: f64,
    /// Terms decaying faster than this multiple of the H_S spectral width
    /// are eliminated adiabatically. `None` keeps every term.
    pub stiff_factor: Option<f64>,
    pub parallel: bool,
    /// Maximum number of auxiliary matrices.
    pub budget: usize,
}

impl Default for HeomOptions {
    fn default() -> Self {
        HeomOptions {
            level: 4,
            scaled_ados: true,
            renormalization: true,
            frame_omega: 0.0,
            stiff_factor: Some(100.0),
            parallel: false,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Off-diagonal Hamiltonian element pair (a < b) split into static and
/// drive parts.
#[derive(Clone, Copy, Debug)]
struct OffDiagonal {
    a: usize,
    b: usize,
    fixed: f64,
    dipole: f64,
    /// N_a − N_b, which sets the frame phase of the drive part.
    dn: i32,
}

struct LindbladChannel {
    lower: Mat8,
    rate: f64,
}

/// Everything needed to evaluate the hierarchy derivative.
pub struct HeomSystem {
    hierarchy: Hierarchy,
    modes: Vec<ExpansionTerm>,
    eliminated: Vec<ExpansionTerm>,
    s_diag: [f64; DIM],
    number: [f64; DIM],
    offdiag: Vec<OffDiagonal>,
    /// Element-wise generator: −i(h_a − h_b) plus eliminated-term corrections.
    elementwise: [C64; DIM2],
    /// i Σ_k n_k γ_k per matrix.
    drift: Vec<C64>,
    /// Upward weights per (matrix, term).
    up_weight: Vec<f64>,
    /// Downward α and α̃ weights per (matrix, term).
    down_alpha: Vec<C64>,
    down_alpha_tilde: Vec<C64>,
    /// Scale factor c_n with ρ_n = c_n σ_n.
    scale: Vec<f64>,
    pulse: Option<Pulse>,
    lindblad: Vec<LindbladChannel>,
    options: HeomOptions,
}

impl HeomSystem {
    pub fn new(
        ops: &SystemOperators,
        expansion: Option<&BathExpansion>,
        pulse: Option<Pulse>,
        rates: EmissionRates,
        options: HeomOptions,
    ) -> Result<HeomSystem> {
        let h_static = if options.renormalization {
            ops.h_system + ops.renormalization()
        } else {
            ops.h_system
        };
        if h_static.hermiticity_error() > 1e-12 * h_static.max_abs() {
            return Err(Error::Hierarchy("system Hamiltonian is not Hermitian".into()));
        }
        let s_diag = ops.s_diagonal();
        for a in 0..DIM {
            for b in 0..DIM {
                if a != b && ops.s_coupling[(a, b)].norm() != 0.0 {
                    return Err(Error::Hierarchy("coupling operator must be diagonal in the site basis".into()));
                }
            }
        }
        let number: [f64; DIM] = std::array::from_fn(|a| excitations(a) as f64);

        let eig = h_static.hermitian_eigenvalues();
        let width = eig[DIM - 1] - eig[0];
        let (modes, eliminated): (Vec<ExpansionTerm>, Vec<ExpansionTerm>) = match expansion {
            None => (Vec::new(), Vec::new()),
            Some(exp) => exp.terms.iter().partition(|t| match options.stiff_factor {
                Some(f) => t.rate() <= f * width,
                None => true,
            }),
        };
        let modes: Vec<ExpansionTerm> = modes
            .into_iter()
            .filter(|t| t.alpha.norm() > 0.0 || t.alpha_tilde.norm() > 0.0)
            .collect();

        let hierarchy = enumerate_hierarchy(modes.len(), options.level, options.budget)?;
        let n_ado = hierarchy.len();
        let n_modes = modes.len();

        let mut offdiag = Vec::new();
        for a in 0..DIM {
            for b in (a + 1)..DIM {
                let fixed = h_static[(a, b)];
                let dipole = ops.dipole[(a, b)];
                if fixed.im != 0.0 || dipole.im != 0.0 {
                    return Err(Error::Hierarchy("complex Hamiltonian elements are not supported".into()));
                }
                if fixed.re != 0.0 || dipole.re != 0.0 {
                    offdiag.push(OffDiagonal {
                        a,
                        b,
                        fixed: fixed.re,
                        dipole: dipole.re,
                        dn: number[a] as i32 - number[b] as i32,
                    });
                }
            }
        }

        let mut elementwise = [ZERO; DIM2];
        for a in 0..DIM {
            for b in 0..DIM {
                let ha = h_static[(a, a)].re - options.frame_omega * number[a];
                let hb = h_static[(b, b)].re - options.frame_omega * number[b];
                let mut v = -I * (ha - hb);
                for t in &eliminated {
                    let (sa, sb) = (s_diag[a], s_diag[b]);
                    v -= I / t.gamma * (sa - sb) * (t.alpha * sa - t.alpha_tilde * sb);
                }
                elementwise[a * DIM + b] = v;
            }
        }

        let mode_scale: Vec<f64> = modes
            .iter()
            .map(|t| {
                let m = t.alpha.norm().max(t.alpha_tilde.norm());
                if options.scaled_ados && m > 0.0 {
                    m
                } else {
                    1.0
                }
            })
            .collect();

        let mut drift = vec![ZERO; n_ado];
        let mut scale = vec![1.0; n_ado];
        let mut up_weight = vec![0.0; n_ado * n_modes];
        let mut down_alpha = vec![ZERO; n_ado * n_modes];
        let mut down_alpha_tilde = vec![ZERO; n_ado * n_modes];
        for j in 0..n_ado {
            let occ = hierarchy.occupation(j);
            let mut c = 1.0;
            for k in 0..n_modes {
                let nk = occ[k] as f64;
                drift[j] += I * nk * modes[k].gamma;
                if options.scaled_ados {
                    for m in 1..=occ[k] {
                        c *= (m as f64 * mode_scale[k]).sqrt();
                    }
                    up_weight[j * n_modes + k] = ((nk + 1.0) * mode_scale[k]).sqrt();
                    let w = (nk / mode_scale[k]).sqrt();
                    down_alpha[j * n_modes + k] = modes[k].alpha * w;
                    down_alpha_tilde[j * n_modes + k] = modes[k].alpha_tilde * w;
                } else {
                    up_weight[j * n_modes + k] = 1.0;
                    down_alpha[j * n_modes + k] = modes[k].alpha * nk;
                    down_alpha_tilde[j * n_modes + k] = modes[k].alpha_tilde * nk;
                }
            }
            scale[j] = c;
        }

        let mut lindblad = Vec::new();
        if rates.resonator > 0.0 {
            lindblad.push(LindbladChannel {
                lower: ops.lower_res,
                rate: rates.resonator,
            });
        }
        if rates.waveguide > 0.0 {
            lindblad.push(LindbladChannel {
                lower: ops.lower_guide,
                rate: rates.waveguide,
            });
        }

        Ok(HeomSystem {
            hierarchy,
            modes,
            eliminated,
            s_diag,
            number,
            offdiag,
            elementwise,
            drift,
            up_weight,
            down_alpha,
            down_alpha_tilde,
            scale,
            pulse,
            lindblad,
            options,
        })
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn n_ado(&self) -> usize {
        self.hierarchy.len()
    }

    /// Length of the flattened state vector.
    pub fn dim(&self) -> usize {
        self.n_ado() * DIM2
    }

    /// Expansion terms carried by the hierarchy.
    pub fn modes(&self) -> &[ExpansionTerm] {
        &self.modes
    }

    /// Expansion terms folded in adiabatically.
    pub fn eliminated(&self) -> &[ExpansionTerm] {
        &self.eliminated
    }

    pub fn options(&self) -> &HeomOptions {
        &self.options
    }

    pub fn pulse(&self) -> Option<&Pulse> {
        self.pulse.as_ref()
    }

    /// c_n relating stored and physical matrices, ρ_n = c_n σ_n.
    pub fn ado_scale(&self, j: usize) -> f64 {
        self.scale[j]
    }

    /// Frame phase factor e^{iω_f t (N_a − N_b)} for element (a, b).
    #[inline]
    fn frame_phase(&self, t: f64, a: usize, b: usize) -> C64 {
        let dn = self.number[a] - self.number[b];
        if dn == 0.0 || self.options.frame_omega == 0.0 {
            return C64::new(1.0, 0.0);
        }
        (I * self.options.frame_omega * t * dn).exp()
    }

    /// Maps a lab-frame matrix into the propagation frame at time t.
    pub fn to_frame(&self, t: f64, rho: &Mat8) -> Mat8 {
        Mat8::from_fn(|a, b| rho[(a, b)] * self.frame_phase(t, a, b))
    }

    /// Maps a propagation-frame matrix back to the lab frame at time t.
    pub fn from_frame(&self, t: f64, rho: &Mat8) -> Mat8 {
        Mat8::from_fn(|a, b| rho[(a, b)] * self.frame_phase(t, a, b).conj())
    }

    /// Hierarchy state with the given lab-frame system matrix at t = 0 and
    /// all auxiliary matrices zero.
    pub fn initial_state(&self, rho_s: &Mat8) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim()];
        y[..DIM2].copy_from_slice(rho_s.as_slice());
        y
    }

    /// Lab-frame system density matrix of a state at time t.
    pub fn system_matrix(&self, t: f64, y: &[C64]) -> Mat8 {
        self.from_frame(t, &Mat8::from_slice(&y[..DIM2]))
    }

    /// Time-dependent off-diagonal elements (a, b, H_ab) at time t.
    fn offdiag_at(&self, t: f64) -> Vec<(usize, usize, C64)> {
        let e = match &self.pulse {
            Some(p) => field_value(t, p),
            None => 0.0,
        };
        let phase = if self.options.frame_omega != 0.0 && e != 0.0 {
            (I * self.options.frame_omega * t).exp()
        } else {
            C64::new(1.0, 0.0)
        };
        self.offdiag
            .iter()
            .filter_map(|o| {
                let drive = -e * o.dipole;
                let drive = match o.dn {
                    0 => C64::new(drive, 0.0),
                    1 => phase * drive,
                    -1 => phase.conj() * drive,
                    _ => unreachable!("dipole changes N by at most one"),
                };
                let h = drive + o.fixed;
                (h.norm() != 0.0).then_some((o.a, o.b, h))
            })
            .collect()
    }

    /// Derivative of one stored matrix.
    fn ado_rhs(&self, j: usize, y: &[C64], out: &mut [C64], hpairs: &[(usize, usize, C64)]) {
        let sigma = &y[j * DIM2..(j + 1) * DIM2];
        let drift = self.drift[j];

        // [H_offdiag, σ]
        let mut comm = [ZERO; DIM2];
        for &(a, b, h) in hpairs {
            let hc = h.conj();
            for c in 0..DIM {
                comm[a * DIM + c] += h * sigma[b * DIM + c];
                comm[b * DIM + c] += hc * sigma[a * DIM + c];
                comm[c * DIM + b] -= sigma[c * DIM + a] * h;
                comm[c * DIM + a] -= sigma[c * DIM + b] * hc;
            }
        }
        for e in 0..DIM2 {
            out[e] = (self.elementwise[e] + drift) * sigma[e] - I * comm[e];
        }

        let n_modes = self.modes.len();
        if n_modes > 0 {
            let mut upper = [ZERO; DIM2];
            let mut lower_left = [ZERO; DIM2];
            let mut lower_right = [ZERO; DIM2];
            let (mut any_up, mut any_down) = (false, false);
            for k in 0..n_modes {
                if let Some(u) = self.hierarchy.up(j, k) {
                    any_up = true;
                    let w = self.up_weight[j * n_modes + k];
                    let src = &y[u * DIM2..(u + 1) * DIM2];
                    for e in 0..DIM2 {
                        upper[e] += src[e] * w;
                    }
                }
                if let Some(d) = self.hierarchy.down(j, k) {
                    any_down = true;
                    let wa = self.down_alpha[j * n_modes + k];
                    let wt = self.down_alpha_tilde[j * n_modes + k];
                    let src = &y[d * DIM2..(d + 1) * DIM2];
                    for e in 0..DIM2 {
                        lower_left[e] += wa * src[e];
                        lower_right[e] += wt * src[e];
                    }
                }
            }
            if any_up || any_down {
                for a in 0..DIM {
                    let sa = self.s_diag[a];
                    for b in 0..DIM {
                        let sb = self.s_diag[b];
                        let e = a * DIM + b;
                        // −i[S, X] − i(S P − Q S)
                        out[e] -= I * ((sa - sb) * upper[e] + sa * lower_left[e] - sb * lower_right[e]);
                    }
                }
            }
        }

        if j == 0 && !self.lindblad.is_empty() {
            // N commutes with d₊d₋ and the jump term carries e^{−iω_f t}
            // e^{+iω_f t}, so the dissipator is the same in either frame.
            let rho = Mat8::from_slice(sigma);
            let mut acc = Mat8::zeros();
            for ch in &self.lindblad {
                acc += lindblad_with(&rho, &ch.lower, ch.rate);
            }
            for e in 0..DIM2 {
                out[e] += acc.0[e];
            }
        }
    }

    /// dy/dt of the flattened hierarchy at time t.
    pub fn rhs(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        let hpairs = self.offdiag_at(t);
        if self.options.parallel {
            dy.par_chunks_mut(DIM2)
                .enumerate()
                .for_each(|(j, out)| self.ado_rhs(j, y, out, &hpairs));
        } else {
            for (j, out) in dy.chunks_mut(DIM2).enumerate() {
                self.ado_rhs(j, y, out, &hpairs);
            }
        }
    }

    /// Drive-dependent breakpoints (pulse end) inside (0, t_end).
    pub fn breakpoints(&self, t_end: f64) -> Vec<f64> {
        match &self.pulse {
            Some(p) if p.tau_max < t_end => vec![p.tau_max],
            _ => Vec::new(),
        }
    }
}
