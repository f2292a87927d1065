//! Numerical laboratory for the modified KdV equation `u_t + (u_xx + u^3)_x = 0`.
//!
//! Builds exact N-solitons, the conserved-quantity hierarchy and the action
//! functional whose critical points they are, assembles the linearized
//! operators around solitons and multi-solitons, and checks their spectra,
//! factorization and inertia against the finite-dimensional Hessian criterion
//! for orbital stability. A pseudo-spectral integrator drives the
//! perturbation experiments.

pub mod error;
pub mod evolve;
pub mod grid;
pub mod hessian;
pub mod hierarchy;
pub mod linops;
pub mod soliton;

pub use error::{Error, Origin, Result};
pub use grid::{Field, Grid};
pub use soliton::{PhaseSet, SpeedSet};
