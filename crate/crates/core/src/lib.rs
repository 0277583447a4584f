//! Finite-difference scheme for linear stochastic transport equations with
//! gradient noise, together with the lattice Green's-function machinery used
//! to verify its L² stability.
//!
//! - [`lattice`]: grids, difference operators, discrete convolutions.
//! - [`heat_kernel`]: constant-coefficient semi-discrete heat kernel.
//! - [`parametrix`]: variable-coefficient fundamental solution Γ.
//! - [`dual`]: the backward reaction–diffusion dual problem.
//! - [`transport`]: the stochastic scheme, Euler–Maruyama and energy terms.

pub mod error;
pub mod dual;
pub mod heat_kernel;
pub mod lattice;
pub mod linsolve;
pub mod parametrix;
pub mod quadrature;
pub mod transport;

pub use error::{Error, Result};

#[cfg(test)]
mod test_util;
