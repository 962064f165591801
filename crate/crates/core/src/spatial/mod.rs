//! Spatial discretization: uniform grids, nodal fields, the second-order
//! operator and its adjoint, and the nonlocal space-mean operator.

mod garding;
mod grid;
mod mean;
mod operator;

pub use garding::{check_garding, GardingReport};
pub use grid::{build_grid, inner_product, norm, BoundaryKind, Field, Grid};
pub use mean::{space_mean, space_mean_adjoint, space_mean_dual_weight, SpaceMean};
pub use operator::{apply_a, apply_a_star, OperatorSpec};
