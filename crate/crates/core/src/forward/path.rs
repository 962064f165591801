use crate::spatial::{Field, Grid};

/// Time-indexed family of fields on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
}

impl FieldPath {
    pub fn new(times: Vec<f64>, fields: Vec<Field>) -> Self {
        debug_assert_eq!(times.len(), fields.len());
        Self { times, fields }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.fields[0].grid
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.fields[k].values
    }

    pub fn last(&self) -> &Field {
        self.fields.last().expect("non-empty path")
    }

    pub fn min_interior(&self) -> f64 {
        self.fields.iter().flat_map(|f| f.interior().iter().cloned()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &FieldPath) -> f64 {
        self.fields.iter().zip(&other.fields).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }

    /// Rows of `(t, x, value)` in time-major order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.times.iter().zip(&self.fields).flat_map(|(t, f)| {
            f.grid.node_positions().into_iter().zip(f.values.iter().cloned()).map(move |(x, v)| (*t, x, v))
        })
    }
}
