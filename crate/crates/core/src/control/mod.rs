//! Hamiltonian, adjoint assembly, performance estimates, threshold policies
//! and first-order optimality diagnostics.

mod adjoint;
mod directional;
mod hamiltonian;
mod performance;
mod policy;
mod stress;

pub use adjoint::{assemble_adjoint, assemble_adjoint_with, AdjointOptions, AdjointSpec};
pub use directional::{directional_derivative_j, DirectionalReport, FiniteDifference, DEFAULT_EPS};
pub use hamiltonian::{hamiltonian, HamiltonianEval};
pub use performance::{path_value, performance_j, performance_samples, Estimate};
pub use policy::{
    check_necessary, extract_policy, MPReport, PolicyConvention, PolicyOptions, PolicyResult, Tolerances,
    COEFFICIENT_FLOOR, HARVEST_MARGIN,
};
pub use stress::{compare_controls, stress_family, Comparison, ComparisonRow, StressControl};
