//! Numerical laboratory for diffusion processes in noncanonical Hamiltonian
//! systems.
//!
//! The crate covers the full chain from microscopic stochastic dynamics to
//! the macroscopic bracket formalism:
//!
//! - [`poisson`]: finite-dimensional Poisson operators, Hamiltonians,
//!   Casimirs, and numerical verifiers of their algebraic identities.
//! - [`systems`]: named example systems and user-defined polynomial systems.
//! - [`sde`]: perturbed particle dynamics (energy fluctuation plus friction)
//!   integrated with a Stratonovich-consistent Heun scheme.
//! - [`grid`] and [`fpe`]: a flux-form Fokker-Planck solver on rectangular
//!   grids with no-flux boundaries, conserving mass and energy and obeying
//!   the discrete entropy law.
//! - [`brackets`]: the macroscopic Poisson/dissipative brackets acting on
//!   functionals, bracket axiom verification, and the bracket-generated
//!   right-hand side.
//! - [`chm`]: the truncated Charney-Hasegawa-Mima spectral system, its
//!   conservation laws, deterministic integration, and stochastic
//!   thermalization against the closed-form equilibrium spectrum.
//! - [`report`], [`output`], [`run`]: verification reports, artifact
//!   writers, and the configuration-driven scenario runner.

pub mod brackets;
pub mod chm;
pub mod error;
pub mod fpe;
pub mod grid;
pub mod output;
pub mod poisson;
pub mod report;
pub mod run;
pub mod sde;
pub mod systems;

pub use error::{Error, Result};
