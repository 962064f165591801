//! Reflected backward equations: penalized and projected solvers in a
//! deterministic backend, a least-squares Monte Carlo backend, a PSOR
//! reference solver and penalization-rate diagnostics.

mod oracle;
mod rate;
mod regression;
mod solver;
mod spec;

pub use oracle::psor_oracle;
pub use rate::{fit_slope, penalization_rate, penalty_energy, RateReport};
pub use regression::{solve_penalized_regression, RegressionSolution};
pub use solver::{
    skorokhod_residual, solve_penalized, solve_projected, solve_reflected, solve_reflected_with, BackwardSolution,
    Diagnostics, Extrapolation, Penalty,
};
pub use spec::{BackwardSpec, LinearDriver, MeanForm, Obstacle, Side, SingularTerm, StepOrder};
