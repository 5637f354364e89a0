//! Hierarchical equations of motion for a driven, dissipative three-qubit
//! network coupled to a structured bosonic bath.
//!
//! The crate is organised bottom-up:
//!
//! * [`network`] builds the Hamiltonian, coupling and emission operators and
//!   labels the eigenstates (ground, dark pair, bright, and their doubly
//!   excited partners).
//! * [`bath`] holds the four-pole Lorentzian spectral density and its
//!   exponential expansion.
//! * [`driving`] describes the sin²-envelope microwave pulse.
//! * [`hierarchy`] and [`heom`] build and evaluate the hierarchy.
//! * [`integrator`] propagates it with adaptive Cash–Karp steps.
//! * [`observables`] and [`simulation`] turn trajectories into populations,
//!   emission fluxes and the resonator/loss efficiency ratio.
//!
//! Everything internal is in atomic units (ħ = 1); [`units`] converts to GHz,
//! ns and MHz at the edges.

pub mod bath;
pub mod checkpoint;
pub mod driving;
pub mod error;
pub mod heom;
pub mod hierarchy;
pub mod integrator;
pub mod linalg;
pub mod network;
pub mod observables;
pub mod quadrature;
pub mod simulation;
pub mod units;

pub use error::{Error, Result};

// Book chapters with Rust snippets, compiled and run by `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/bath.md")]
    mod bath {}
    #[doc = include_str!("../../../book/src/driving.md")]
    mod driving {}
    #[doc = include_str!("../../../book/src/hierarchy.md")]
    mod hierarchy {}
    #[doc = include_str!("../../../book/src/observables.md")]
    mod observables {}
}
