//! Simulation and optimality checks for singular control of stochastic
//! reaction-diffusion equations with a nonlocal space-mean term.
//!
//! * [`spatial`]: grids, fields, the operator `A`, its adjoint and the space mean.
//! * [`forward`]: Euler–Maruyama simulation of the controlled state equation.
//! * [`backward`]: penalized solvers for reflected backward equations.
//! * [`control`]: Hamiltonian, adjoint assembly, performance estimates and
//!   maximum-principle diagnostics.
//! * [`harness`]: configuration, reports, persistence and verification suites.

pub mod backward;
pub mod control;
pub mod error;
pub mod forward;
pub mod harness;
pub mod linalg;
pub mod spatial;

pub use error::{Error, Result};
