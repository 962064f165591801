use super::grid::{BoundaryKind, Field, Grid};
use crate::error::{Error, Result};

/// Assembled space-mean operator on a grid.
///
/// The field is the piecewise-linear interpolant of its nodal values,
/// extended by zero outside the domain. Row `i` holds the exact integral of
/// each hat function over the window `(x_i - theta, x_i + theta)`, divided by
/// the full window length `2 theta`, so partial cells at the window ends are
/// integrated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceMean {
    grid: Grid,
    theta: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SpaceMean {
    pub fn new(grid: &Grid, theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidTheta(theta));
        }
        let h = grid.h;
        let n_nodes = grid.n_nodes();
        let rows = (0..n_nodes)
            .map(|i| {
                let c = grid.x(i);
                let lo = (c - theta).max(grid.x_min);
                let hi = (c + theta).min(grid.x_max);
                let mut row: Vec<(usize, f64)> = Vec::new();
                let mut push = |j: usize, w: f64| match row.last_mut() {
                    Some((k, acc)) if *k == j => *acc += w,
                    _ => row.push((j, w)),
                };
                for k in 0..n_nodes - 1 {
                    let (xl, xr) = (grid.x(k), grid.x(k + 1));
                    let a = lo.max(xl);
                    let b = hi.min(xr);
                    if b <= a {
                        continue;
                    }
                    let left = ((xr - a).powi(2) - (xr - b).powi(2)) / (2.0 * h);
                    let right = ((b - xl).powi(2) - (a - xl).powi(2)) / (2.0 * h);
                    push(k, left / (2.0 * theta));
                    push(k + 1, right / (2.0 * theta));
                }
                row
            })
            .collect();
        Ok(Self { grid: *grid, theta, rows })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Nodal space mean of `values` (one value per node).
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, w)| w * values[j]).sum()).collect()
    }

    /// Transpose with respect to the interior inner product: only interior
    /// rows contribute, output is given at every node.
    pub fn apply_adjoint(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_nodes()];
        for i in self.grid.interior() {
            for &(j, w) in &self.rows[i] {
                out[j] += w * values[i];
            }
        }
        out
    }

    pub fn weights(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }
}

pub fn space_mean(field: &Field, theta: f64) -> Result<Field> {
    let g = SpaceMean::new(&field.grid, theta)?;
    Ok(Field { grid: field.grid, values: g.apply(&field.values), boundary: BoundaryKind::DirichletData })
}

/// Adjoint averaging of `field`; for fields vanishing on the boundary,
/// `<space_mean(phi), psi> = <phi, space_mean_adjoint(psi)>` exactly.
pub fn space_mean_adjoint(field: &Field, theta: f64) -> Result<Field> {
    let g = SpaceMean::new(&field.grid, theta)?;
    Ok(Field { grid: field.grid, values: g.apply_adjoint(&field.values), boundary: BoundaryKind::DirichletData })
}

/// Closed-form dual weight `|(x - theta, x + theta) ∩ D| / (2 theta)`.
pub fn space_mean_dual_weight(grid: &Grid, theta: f64) -> Result<Field> {
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::InvalidTheta(theta));
    }
    let values = grid
        .node_positions()
        .into_iter()
        .map(|x| {
            if x - theta >= grid.x_min && x + theta <= grid.x_max {
                1.0
            } else {
                ((x + theta).min(grid.x_max) - (x - theta).max(grid.x_min)).max(0.0) / (2.0 * theta)
            }
        })
        .collect();
    Ok(Field { grid: *grid, values, boundary: BoundaryKind::DirichletData })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{build_grid, inner_product, norm};
    use proptest::prelude::*;

    fn unit(n: usize) -> Grid {
        build_grid(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn constant_interior_and_edge() {
        // h = 0.05 so x = 0.5 and x = 0.05 are nodes
        let g = unit(19);
        let one = Field::constant(g, 1.0);
        let m = space_mean(&one, 0.1).unwrap();
        assert!((m.values[10] - 1.0).abs() < 1e-14);
        assert!((m.values[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn linear_is_reproduced_at_centre() {
        let g = unit(19);
        let f = Field::from_fn(g, BoundaryKind::DirichletData, |x| x);
        let m = space_mean(&f, 0.1).unwrap();
        assert!((m.values[10] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn window_not_aligned_with_nodes() {
        // theta between nodes, constant field: interior windows still give 1
        let g = unit(30);
        let one = Field::constant(g, 1.0);
        let m = space_mean(&one, 0.0731).unwrap();
        for i in g.interior() {
            let x = g.x(i);
            let expect = ((x + 0.0731).min(1.0) - (x - 0.0731).max(0.0)) / (2.0 * 0.0731);
            assert!((m.values[i] - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn dual_weight_values() {
        let g = unit(19);
        let w = space_mean_dual_weight(&g, 0.1).unwrap();
        assert_eq!(w.values[10], 1.0);
        assert!((w.values[0] - 0.5).abs() < 1e-15);
        assert!((w.values[20] - 0.5).abs() < 1e-15);
        assert_eq!(space_mean_dual_weight(&g, -1.0), Err(Error::InvalidTheta(-1.0)));
        assert!(space_mean(&Field::zeros(g), 0.0).is_err());
    }

    #[test]
    fn adjoint_of_one_approximates_dual_weight() {
        let g = unit(199);
        let mut one = Field::constant(g, 1.0);
        one.values[0] = 0.0;
        one.values[200] = 0.0;
        let adj = space_mean_adjoint(&one, 0.1).unwrap();
        let w = space_mean_dual_weight(&g, 0.1).unwrap();
        for i in g.interior() {
            assert!((adj.values[i] - w.values[i]).abs() <= g.h / (2.0 * 0.1), "node {i}: {} vs {}", adj.values[i], w.values[i]);
        }
    }

    fn zero_bc(g: Grid, v: Vec<f64>) -> Field {
        Field::new(g, v, BoundaryKind::DirichletZero).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn linear_in_field(a in -3.0..3.0f64, b in -3.0..3.0f64,
                           phi in prop::collection::vec(-1.0..1.0f64, 42),
                           psi in prop::collection::vec(-1.0..1.0f64, 42)) {
            let g = unit(40);
            let op = SpaceMean::new(&g, 0.13).unwrap();
            let comb: Vec<f64> = phi.iter().zip(&psi).map(|(x, y)| a * x + b * y).collect();
            let lhs = op.apply(&comb);
            let (p, q) = (op.apply(&phi), op.apply(&psi));
            for i in 0..42 {
                let rhs = a * p[i] + b * q[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn adjoint_identity(phi in prop::collection::vec(-1.0..1.0f64, 52),
                            psi in prop::collection::vec(-1.0..1.0f64, 52)) {
            let g = unit(50);
            let (phi, psi) = (zero_bc(g, phi), zero_bc(g, psi));
            let lhs = inner_product(&space_mean(&phi, 0.1).unwrap(), &psi).unwrap();
            let rhs = inner_product(&phi, &space_mean_adjoint(&psi, 0.1).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-3));
        }

        #[test]
        fn contraction(v in prop::collection::vec(-5.0..5.0f64, 102), theta in 0.01..0.5f64) {
            let g = unit(100);
            let phi = zero_bc(g, v);
            let m = space_mean(&phi, theta).unwrap();
            prop_assert!(norm(&m) <= norm(&phi) * (1.0 + 10.0 * g.h));
        }
    }
}
