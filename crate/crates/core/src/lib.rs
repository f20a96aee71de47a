//! Hamiltonian formulation of Black-Scholes and Merton-Garman pricing:
//! finite-difference operators, backward evolution, martingale and vacuum
//! diagnostics, potentials, and a Monte Carlo engine.

pub mod banded;
pub mod convergence;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod martingale;
pub mod operators;
pub mod params;
pub mod potentials;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::{Axis, GridSpec, ValueField};
pub use operators::{apply, build_bs_hamiltonian, build_mg_hamiltonian, hermiticity_defect, Closure, OperatorMatrix};
pub use params::{BSParams, MGParams};
