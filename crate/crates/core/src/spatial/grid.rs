use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[x_min, x_max]` with `n_cells` interior nodes and one
/// boundary node at each end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    pub h: f64,
}

pub fn build_grid(x_min: f64, x_max: f64, n_cells: usize) -> Result<Grid> {
    if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
        return Err(Error::InvalidBounds { x_min, x_max });
    }
    if n_cells < 2 {
        return Err(Error::InvalidSize(n_cells));
    }
    Ok(Grid { x_min, x_max, n_cells, h: (x_max - x_min) / (n_cells + 1) as f64 })
}

impl Grid {
    /// Total node count, boundary nodes included.
    pub fn n_nodes(&self) -> usize {
        self.n_cells + 2
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.n_cells + 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.h
        }
    }

    pub fn node_positions(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|i| self.x(i)).collect()
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        1..self.n_cells + 1
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i == self.n_cells + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    DirichletZero,
    DirichletData,
}

/// Nodal values on a grid, boundary nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub boundary: BoundaryKind,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, boundary: BoundaryKind) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::ShapeMismatch(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        let mut f = Self { grid, values, boundary };
        if boundary == BoundaryKind::DirichletZero {
            f.zero_boundary();
        }
        Ok(f)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.n_nodes()], boundary: BoundaryKind::DirichletZero }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.n_nodes()], boundary: BoundaryKind::DirichletData }
    }

    pub fn from_fn(grid: Grid, boundary: BoundaryKind, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.node_positions().into_iter().map(f).collect();
        let mut field = Self { grid, values, boundary };
        if boundary == BoundaryKind::DirichletZero {
            field.zero_boundary();
        }
        field
    }

    fn zero_boundary(&mut self) {
        let last = self.values.len() - 1;
        self.values[0] = 0.0;
        self.values[last] = 0.0;
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }

    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Discrete L2 inner product `h * sum f_i g_i` over interior nodes.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    Ok(f.interior().iter().zip(g.interior()).map(|(a, b)| a * b).sum::<f64>() * f.grid.h)
}

pub fn norm(f: &Field) -> f64 {
    (f.interior().iter().map(|v| v * v).sum::<f64>() * f.grid.h).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_three_cells() {
        let g = build_grid(0.0, 1.0, 3).unwrap();
        assert_eq!(g.h, 0.25);
        assert_eq!(g.node_positions(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(build_grid(0.0, 1.0, 1), Err(Error::InvalidSize(1)));
        assert!(matches!(build_grid(1.0, 1.0, 5), Err(Error::InvalidBounds { .. })));
        assert!(matches!(build_grid(2.0, 1.0, 5), Err(Error::InvalidBounds { .. })));
    }

    #[test]
    fn spacing_two_over_hundred() {
        let g = build_grid(0.0, 2.0, 99).unwrap();
        assert!((g.h - 0.02).abs() < 1e-15);
        let x = g.node_positions();
        assert!(x.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*x.last().unwrap(), 2.0);
    }

    #[test]
    fn inner_products() {
        let g = build_grid(0.0, 1.0, 99).unwrap();
        let one = Field::constant(g, 1.0);
        assert!((inner_product(&one, &one).unwrap() - 0.99).abs() < 1e-12);
        let zero = Field::zeros(g);
        assert_eq!(inner_product(&zero, &one).unwrap(), 0.0);

        let g = build_grid(0.0, 1.0, 199).unwrap();
        let s = Field::from_fn(g, BoundaryKind::DirichletZero, |x| (std::f64::consts::PI * x).sin());
        assert!((inner_product(&s, &s).unwrap() - 0.5).abs() < 1e-4);

        let other = Field::zeros(build_grid(0.0, 1.0, 10).unwrap());
        assert_eq!(inner_product(&s, &other), Err(Error::GridMismatch));
    }

    #[test]
    fn dirichlet_zero_forces_boundary() {
        let g = build_grid(0.0, 1.0, 4).unwrap();
        let f = Field::new(g, vec![3.0; 6], BoundaryKind::DirichletZero).unwrap();
        assert_eq!(f.values[0], 0.0);
        assert_eq!(f.values[5], 0.0);
        assert!(Field::new(g, vec![0.0; 5], BoundaryKind::DirichletData).is_err());
    }
}
