//! The three-qubit network: operators in the site basis and the labelled
//! eigenstructure (ground, dark doublet, bright state, and the mirrored
//! two-excitation triplet).
//!
//! Basis states are |n₁n₂n₃⟩ with n_i ∈ {0, 1}; the flat index of a state is
//! `4·n₁ + 2·n₂ + n₃`, so |100⟩ is index 4 and |001⟩ is index 1.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat8, DIM};
use crate::units;

/// Dipole matrix elements above this value (a.u.) mark a state as bright.
pub const BRIGHT_THRESHOLD: f64 = 0.3;

/// Bit of site `site` (1-based) in a basis index.
#[inline]
pub fn site_bit(site: usize) -> usize {
    1 << (3 - site)
}

/// Number of excitations of a basis index.
#[inline]
pub fn excitations(index: usize) -> usize {
    (index as u32).count_ones() as usize
}

/// Ket label such as `|011⟩` for a basis index.
pub fn ket_label(index: usize) -> String {
    format!("|{}{}{}⟩", (index >> 2) & 1, (index >> 1) & 1, index & 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Qubit transition frequencies in GHz (ordinary frequencies).
    pub omega_ghz: [f64; 3],
    /// Symmetric coupling matrix in GHz with zero diagonal.
    pub coupling_ghz: [[f64; 3]; 3],
    /// 1-based indices of the qubits driven by the waveguide.
    pub dipole_sites: Vec<usize>,
    /// Single-qubit transition dipole in a.u.
    pub dipole_moment: f64,
    /// 1-based index of the qubit whose excited state couples to the bath.
    pub noise_site: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        let mut coupling_ghz = [[0.0; 3]; 3];
        coupling_ghz[0][1] = 0.5;
        coupling_ghz[1][0] = 0.5;
        coupling_ghz[1][2] = 0.05;
        coupling_ghz[2][1] = 0.05;
        NetworkSpec {
            omega_ghz: [12.0, 12.0, 11.5],
            coupling_ghz,
            dipole_sites: vec![1, 2],
            dipole_moment: 1.0,
            noise_site: 2,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.omega_ghz.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::Network(format!(
                    "frequency of qubit {} must be positive, got {w}",
                    i + 1
                )));
            }
        }
        let mut bad = Vec::new();
        for i in 0..3 {
            if self.coupling_ghz[i][i] != 0.0 {
                bad.push(format!("J{}{} = {} (diagonal must vanish)", i + 1, i + 1, self.coupling_ghz[i][i]));
            }
            for j in (i + 1)..3 {
                let (a, b) = (self.coupling_ghz[i][j], self.coupling_ghz[j][i]);
                if a != b {
                    bad.push(format!("J{}{} = {a} vs J{}{} = {b}", i + 1, j + 1, j + 1, i + 1));
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::Network(format!(
                "coupling matrix is not symmetric: {}",
                bad.join(", ")
            )));
        }
        if !(1..=3).contains(&self.noise_site) {
            return Err(Error::Network(format!(
                "noise site must be 1, 2 or 3, got {}",
                self.noise_site
            )));
        }
        if let Some(s) = self.dipole_sites.iter().find(|s| !(1..=3).contains(*s)) {
            return Err(Error::Network(format!("dipole site {s} out of range 1..=3")));
        }
        if !self.dipole_moment.is_finite() {
            return Err(Error::Network("dipole moment must be finite".into()));
        }
        Ok(())
    }
}

/// Operators of the network in the site basis, in atomic units.
#[derive(Clone, Debug)]
pub struct SystemOperators {
    pub h_system: Mat8,
    pub s_coupling: Mat8,
    pub dipole: Mat8,
    /// Lowering operator of the resonator channel (qubit 3).
    pub lower_res: Mat8,
    /// Collective lowering operator of the waveguide channel (qubits 1 + 2).
    pub lower_guide: Mat8,
    /// Total excitation number.
    pub number: Mat8,
    /// Excitation number of each qubit.
    pub site_number: [Mat8; 3],
    /// Reorganization energy λ in a.u.; zero until a bath is attached.
    pub h_ren_shift: f64,
}

fn sigma_minus(site: usize) -> Mat8 {
    let bit = site_bit(site);
    let mut m = Mat8::zeros();
    for idx in 0..DIM {
        if idx & bit != 0 {
            m[(idx ^ bit, idx)] = C64::new(1.0, 0.0);
        }
    }
    m
}

fn site_projector(site: usize) -> Mat8 {
    let bit = site_bit(site);
    let mut d = [0.0; DIM];
    for (idx, v) in d.iter_mut().enumerate() {
        if idx & bit != 0 {
            *v = 1.0;
        }
    }
    Mat8::from_real_diagonal(&d)
}

/// Builds every operator of the model from a network description.
pub fn build_operators(spec: &NetworkSpec) -> Result<SystemOperators> {
    spec.validate()?;
    let omega = spec.omega_ghz.map(units::ghz_to_au);

    let mut h = Mat8::zeros();
    for idx in 0..DIM {
        // σ_z = +1 on the excited state, −1 on the ground state.
        let e: f64 = (1..=3)
            .map(|s| {
                let sz = if idx & site_bit(s) != 0 { 1.0 } else { -1.0 };
                0.5 * omega[s - 1] * sz
            })
            .sum();
        h[(idx, idx)] = C64::new(e, 0.0);
    }
    let lowering: [Mat8; 3] = [sigma_minus(1), sigma_minus(2), sigma_minus(3)];
    for i in 0..3 {
        for j in (i + 1)..3 {
            let jij = units::ghz_to_au(spec.coupling_ghz[i][j]);
            if jij == 0.0 {
                continue;
            }
            let hop = lowering[i].dagger() * lowering[j] + lowering[j].dagger() * lowering[i];
            h += hop.scale(C64::new(jij, 0.0));
        }
    }

    let site_number = [site_projector(1), site_projector(2), site_projector(3)];
    let number = site_number[0] + site_number[1] + site_number[2];

    // S = σ_z + 1 on the noise site, i.e. twice its excitation projector.
    let s_coupling = site_number[spec.noise_site - 1].scale(C64::new(2.0, 0.0));

    let mut dipole = Mat8::zeros();
    for &s in &spec.dipole_sites {
        let sm = lowering[s - 1];
        dipole += (sm + sm.dagger()).scale(C64::new(spec.dipole_moment, 0.0));
    }

    Ok(SystemOperators {
        h_system: h,
        s_coupling,
        dipole,
        lower_res: lowering[2],
        lower_guide: lowering[0] + lowering[1],
        number,
        site_number,
        h_ren_shift: 0.0,
    })
}

impl SystemOperators {
    /// Returns a copy carrying the reorganization energy of an attached bath.
    pub fn with_reorganization(mut self, lambda: f64) -> Self {
        self.h_ren_shift = lambda;
        self
    }

    /// Counter-term λ·S², which equals 2λ·S because S has spectrum {0, 2}.
    pub fn renormalization(&self) -> Mat8 {
        (self.s_coupling * self.s_coupling).scale(C64::new(self.h_ren_shift, 0.0))
    }

    /// Diagonal of the coupling operator (it is diagonal in the site basis).
    pub fn s_diagonal(&self) -> [f64; DIM] {
        std::array::from_fn(|i| self.s_coupling[(i, i)].re)
    }
}

/// Labels of the eight eigenstates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StateLabel {
    G,
    DMinus,
    DPlus,
    B,
    De,
    BeMinus,
    BePlus,
    Top,
}

impl StateLabel {
    pub const ALL: [StateLabel; 8] = [
        StateLabel::G,
        StateLabel::DMinus,
        StateLabel::DPlus,
        StateLabel::B,
        StateLabel::De,
        StateLabel::BeMinus,
        StateLabel::BePlus,
        StateLabel::Top,
    ];

    /// Short ASCII name used in file headers.
    pub fn short(self) -> &'static str {
        match self {
            StateLabel::G => "g",
            StateLabel::DMinus => "Dm",
            StateLabel::DPlus => "Dp",
            StateLabel::B => "B",
            StateLabel::De => "De",
            StateLabel::BeMinus => "Bem",
            StateLabel::BePlus => "Bep",
            StateLabel::Top => "top",
        }
    }

    pub fn sector(self) -> usize {
        match self {
            StateLabel::G => 0,
            StateLabel::DMinus | StateLabel::DPlus | StateLabel::B => 1,
            StateLabel::De | StateLabel::BeMinus | StateLabel::BePlus => 2,
            StateLabel::Top => 3,
        }
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for StateLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StateLabel::ALL
            .into_iter()
            .find(|l| l.short().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Network(format!("unknown state label `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub struct EigenStructure {
    /// Eigenvalues in a.u., ascending.
    pub energies: [f64; DIM],
    /// Eigenvectors in the site basis; `vectors[k]` belongs to `energies[k]`.
    pub vectors: [[C64; DIM]; DIM],
    /// Eigen-index of each label, in `StateLabel::ALL` order.
    pub labels: [usize; DIM],
    /// |⟨i|dipole|j⟩| between eigen-indices.
    pub dipole_table: [[f64; DIM]; DIM],
    /// Rounded excitation number of each eigen-index.
    pub sectors: [usize; DIM],
}

/// Diagonalizes H_S, fixes eigenvector phases and labels the states.
pub fn eigenanalyze(ops: &SystemOperators) -> Result<EigenStructure> {
    let h = &ops.h_system;
    let m = nalgebra::DMatrix::from_fn(DIM, DIM, |i, j| {
        let z = h[(i, j)];
        nalgebra::Complex::new(z.re, z.im)
    });
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..DIM).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut energies = [0.0; DIM];
    let mut vectors = [[C64::new(0.0, 0.0); DIM]; DIM];
    for (k, &src) in order.iter().enumerate() {
        energies[k] = eig.eigenvalues[src];
        let col = eig.eigenvectors.column(src);
        let mut v: [C64; DIM] = std::array::from_fn(|i| C64::new(col[i].re, col[i].im));
        fix_phase(&mut v);
        vectors[k] = v;
    }

    let mut sectors = [0usize; DIM];
    for k in 0..DIM {
        let n = ops.number.sandwich(&vectors[k], &vectors[k]).re;
        sectors[k] = n.round() as usize;
    }
    for (sector, expected) in [(0, 1), (1, 3), (2, 3), (3, 1)] {
        let found = sectors.iter().filter(|&&s| s == sector).count();
        if found != expected {
            return Err(Error::Sector { sector, found, expected });
        }
    }

    let mut dipole_table = [[0.0; DIM]; DIM];
    for i in 0..DIM {
        for j in 0..DIM {
            dipole_table[i][j] = ops.dipole.sandwich(&vectors[i], &vectors[j]).norm();
        }
    }

    let members = |s: usize| -> Vec<usize> { (0..DIM).filter(|&k| sectors[k] == s).collect() };
    let brightness = |k: usize, below: &[usize]| -> f64 {
        below.iter().map(|&j| dipole_table[k][j]).fold(0.0, f64::max)
    };
    // Splits a sector into (bright, dark) by dipole strength to the sector below.
    let classify = |sector: usize, n_bright: usize| -> Result<(Vec<usize>, Vec<usize>)> {
        let below = members(sector - 1);
        let mut ranked = members(sector);
        // Stable sort keeps energy order among equal strengths.
        ranked.sort_by(|&a, &b| brightness(b, &below).total_cmp(&brightness(a, &below)));
        let (bright, dark) = ranked.split_at(n_bright);
        if bright.iter().any(|&k| brightness(k, &below) <= BRIGHT_THRESHOLD)
            || dark.iter().any(|&k| brightness(k, &below) > BRIGHT_THRESHOLD)
        {
            return Err(Error::Network(format!(
                "excitation sector {sector} does not split into {n_bright} bright and {} dark states",
                3 - n_bright
            )));
        }
        let mut bright = bright.to_vec();
        let mut dark = dark.to_vec();
        bright.sort_unstable();
        dark.sort_unstable();
        Ok((bright, dark))
    };

    let (b1, d1) = classify(1, 1)?;
    let (b2, d2) = classify(2, 2)?;
    let labels = [
        members(0)[0],
        d1[0],
        d1[1],
        b1[0],
        d2[0],
        b2[0],
        b2[1],
        members(3)[0],
    ];

    Ok(EigenStructure {
        energies,
        vectors,
        labels,
        dipole_table,
        sectors,
    })
}

/// Rotates the global phase so the largest-magnitude component is real positive.
fn fix_phase(v: &mut [C64; DIM]) {
    let mut best = 0;
    for i in 1..DIM {
        if v[i].norm() > v[best].norm() + 1e-12 {
            best = i;
        }
    }
    let pivot = v[best];
    let phase = pivot.conj() / pivot.norm();
    for z in v.iter_mut() {
        *z *= phase;
    }
    v[best] = C64::new(v[best].norm(), 0.0);
}

impl EigenStructure {
    pub fn index(&self, label: StateLabel) -> usize {
        self.labels[label as usize]
    }

    pub fn energy(&self, label: StateLabel) -> f64 {
        self.energies[self.index(label)]
    }

    pub fn vector(&self, label: StateLabel) -> &[C64; DIM] {
        &self.vectors[self.index(label)]
    }

    /// Transition frequency E(upper) − E(lower) in a.u.
    pub fn gap(&self, lower: StateLabel, upper: StateLabel) -> f64 {
        self.energy(upper) - self.energy(lower)
    }

    /// Carrier resonant with the ground-to-bright transition.
    pub fn omega_gb(&self) -> f64 {
        self.gap(StateLabel::G, StateLabel::B)
    }

    /// Bright-to-dark gap, averaged over the dark doublet.
    pub fn omega_bd(&self) -> f64 {
        0.5 * (self.gap(StateLabel::DMinus, StateLabel::B) + self.gap(StateLabel::DPlus, StateLabel::B))
    }

    /// Unitary whose columns are the eigenvectors, in eigen-index order.
    pub fn unitary(&self) -> Mat8 {
        Mat8::from_fn(|i, k| self.vectors[k][i])
    }

    /// Projector onto a labelled eigenstate.
    pub fn projector(&self, label: StateLabel) -> Mat8 {
        Mat8::projector(self.vector(label))
    }

    pub fn report(&self) -> EigenReport {
        let states = StateLabel::ALL
            .iter()
            .map(|&l| {
                let k = self.index(l);
                LabelledState {
                    label: l.short().to_string(),
                    eigen_index: k,
                    energy_ghz: units::au_to_ghz(self.energies[k]),
                    components: self.vectors[k].iter().map(|z| [z.re, z.im]).collect(),
                }
            })
            .collect();
        EigenReport {
            basis: (0..DIM).map(ket_label).collect(),
            states,
            dipole_table: self.dipole_table.iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// |⟨i|dipole|j⟩| between two labelled eigenstates, in a.u.
pub fn transition_dipole(eig: &EigenStructure, i: StateLabel, j: StateLabel) -> f64 {
    eig.dipole_table[eig.index(i)][eig.index(j)]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LabelledState {
    pub label: String,
    pub eigen_index: usize,
    pub energy_ghz: f64,
    /// Site-basis amplitudes as [re, im].
    pub components: Vec<[f64; 2]>,
}

/// JSON-friendly view of the eigenstructure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenReport {
    pub basis: Vec<String>,
    pub states: Vec<LabelledState>,
    /// Indexed by eigen-index.
    pub dipole_table: Vec<Vec<f64>>,
}
