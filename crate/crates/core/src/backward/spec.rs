use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{TimeGrid, TimeScheme};
use crate::spatial::{Field, Grid, OperatorSpec, SpaceMean};

/// Which side of the obstacle the solution is held on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `Y >= L`
    #[default]
    Lower,
    /// `Y <= L`
    Upper,
}

/// How a nonlocal `Ȳ` term in the driver is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanForm {
    /// `G Y`, the space mean of `Y` itself.
    Average,
    /// `w(x) Y(x)` with the closed-form dual weight `w`.
    #[default]
    DualWeight,
    /// `Gᵀ Y`, the exact discrete adjoint of the space mean.
    Transpose,
}

impl MeanForm {
    pub(crate) fn apply(self, mean: &SpaceMean, weight: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            MeanForm::Average => mean.apply(v),
            MeanForm::Transpose => mean.apply_adjoint(v),
            MeanForm::DualWeight => v.iter().zip(weight).map(|(a, w)| a * w).collect(),
        }
    }
}

/// Order of operations inside one backward step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOrder {
    /// `(I - θ dt B) Y_k = (I + (1-θ) dt B) Y_{k+1} + dt F(Y_{k+1}) + dη_k`,
    /// reflection acting on `Y_k`.
    #[default]
    Standard,
    /// Transpose of the forward step: `s = (I - θ dt B)⁻¹ Y_{k+1}`, reflect
    /// `s`, then `Y_k = s + (1-θ) dt B s + dt F(s) + dη_k`. Makes the adjoint
    /// the exact gradient of the discrete forward scheme.
    Dual,
    /// Transpose of the split forward step (jump after transport): reflect
    /// `Y_{k+1}`, add the singular term, then `s = (I - θ dt B)⁻¹(·)` and
    /// `Y_k = s + (1-θ) dt B s + dt F(s)`.
    DualSplit,
}

/// Driver `F = c(x) + y·Y + y_mean·Ȳ + z·Z + z_mean·Z̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearDriver {
    /// One value per node; boundary entries are ignored.
    pub constant: Vec<f64>,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub y_mean: f64,
    #[serde(default)]
    pub z: f64,
    #[serde(default)]
    pub z_mean: f64,
    #[serde(default)]
    pub mean_form: MeanForm,
}

impl LinearDriver {
    pub fn zero(grid: &Grid) -> Self {
        Self { constant: vec![0.0; grid.n_nodes()], y: 0.0, y_mean: 0.0, z: 0.0, z_mean: 0.0, mean_form: MeanForm::default() }
    }

    /// Lipschitz constant in `(Y, Ȳ, Z, Z̄)`; the mean maps have norm at most one.
    pub fn lipschitz(&self) -> f64 {
        self.y.abs() + self.y_mean.abs() + self.z.abs() + self.z_mean.abs()
    }

    pub(crate) fn negated(&self) -> Self {
        Self { constant: self.constant.iter().map(|c| -c).collect(), ..self.clone() }
    }
}

/// Obstacle `L(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Obstacle {
    None,
    Static { values: Vec<f64> },
    /// One row per time node.
    TimeVarying { values: Vec<Vec<f64>> },
}

impl Obstacle {
    pub fn at(&self, k: usize) -> Option<&[f64]> {
        match self {
            Obstacle::None => None,
            Obstacle::Static { values } => Some(values),
            Obstacle::TimeVarying { values } => Some(&values[k]),
        }
    }

    pub(crate) fn negated(&self) -> Self {
        let neg = |v: &Vec<f64>| v.iter().map(|x| -x).collect::<Vec<_>>();
        match self {
            Obstacle::None => Obstacle::None,
            Obstacle::Static { values } => Obstacle::Static { values: neg(values) },
            Obstacle::TimeVarying { values } => Obstacle::TimeVarying { values: values.iter().map(neg).collect() },
        }
    }
}

/// Singular drift `(offset(x) + slope(x)·Y)·Δξ_k(x)` added to each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularTerm {
    /// `[step][interior node]`, the control increments.
    pub increments: Vec<Vec<f64>>,
    /// Per node.
    pub offset: Vec<f64>,
    /// Per node.
    pub slope: Vec<f64>,
}

impl SingularTerm {
    pub(crate) fn negated(&self) -> Self {
        Self { offset: self.offset.iter().map(|c| -c).collect(), ..self.clone() }
    }

    /// Value of the term at interior node `i` of step `k` for state `y`.
    pub(crate) fn value(&self, k: usize, i: usize, y: f64) -> f64 {
        (self.offset[i] + self.slope[i] * y) * self.increments[k][i - 1]
    }
}

/// A reflected backward equation on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSpec {
    pub grid: Grid,
    pub time: TimeGrid,
    pub op: OperatorSpec,
    /// Use the transpose `A*` of the forward operator instead of `A`.
    pub adjoint: bool,
    pub driver: LinearDriver,
    pub terminal: Field,
    pub obstacle: Obstacle,
    pub side: Side,
    pub singular: Option<SingularTerm>,
    pub scheme: TimeScheme,
    pub order: StepOrder,
}

pub(crate) const TERMINAL_TOL: f64 = 1e-12;

impl BackwardSpec {
    /// Unreflected, driverless problem with implicit stepping.
    pub fn new(op: OperatorSpec, terminal: Field, time: TimeGrid) -> Self {
        let grid = terminal.grid;
        Self {
            grid,
            time,
            op,
            adjoint: false,
            driver: LinearDriver::zero(&grid),
            terminal,
            obstacle: Obstacle::None,
            side: Side::Lower,
            singular: None,
            scheme: TimeScheme::Implicit,
            order: StepOrder::Standard,
        }
    }

    pub fn with_obstacle(mut self, obstacle: Obstacle, side: Side) -> Self {
        self.obstacle = obstacle;
        self.side = side;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidProblem(m.to_string()));
        self.op.validate(&self.grid)?;
        if self.terminal.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        if !(self.time.horizon > 0.0) || self.time.n_steps == 0 {
            return bad("horizon and n_steps must be positive");
        }
        let n = self.grid.n_nodes();
        if self.driver.constant.len() != n {
            return Err(Error::ShapeMismatch("driver constant needs one value per node".into()));
        }
        if !self.driver.lipschitz().is_finite() || self.driver.constant.iter().any(|c| !c.is_finite()) {
            return bad("driver coefficients must be finite");
        }
        if self.terminal.values.iter().any(|v| !v.is_finite()) {
            return bad("terminal values must be finite");
        }
        match &self.obstacle {
            Obstacle::None => {}
            Obstacle::Static { values } if values.len() == n => {}
            Obstacle::TimeVarying { values } if values.len() == self.time.n_steps + 1 && values.iter().all(|r| r.len() == n) => {}
            _ => return Err(Error::ShapeMismatch("obstacle shape does not match the grids".into())),
        }
        if let Some(s) = &self.singular {
            if s.increments.len() != self.time.n_steps
                || s.increments.iter().any(|r| r.len() != self.grid.n_cells)
                || s.offset.len() != n
                || s.slope.len() != n
            {
                return Err(Error::ShapeMismatch("singular term shape does not match the grids".into()));
            }
        }
        if self.adjoint && (self.terminal.values[0] != 0.0 || self.terminal.values[n - 1] != 0.0) {
            return bad("adjoint problems need zero boundary data");
        }
        // The dual order reflects only after the first backward step, so the
        // terminal value itself may sit on the wrong side.
        if self.order == StepOrder::Standard {
            if let Some(l) = self.obstacle.at(self.time.n_steps) {
                let sign = if self.side == Side::Lower { 1.0 } else { -1.0 };
                if self.grid.interior().any(|i| sign * (self.terminal.values[i] - l[i]) < -TERMINAL_TOL) {
                    return bad("terminal value lies on the wrong side of the obstacle");
                }
            }
        }
        Ok(())
    }

    /// The lower-side problem for `-Y`.
    pub fn negated(&self) -> Self {
        let mut terminal = self.terminal.clone();
        terminal.values.iter_mut().for_each(|v| *v = -*v);
        Self {
            driver: self.driver.negated(),
            terminal,
            obstacle: self.obstacle.negated(),
            side: match self.side {
                Side::Lower => Side::Upper,
                Side::Upper => Side::Lower,
            },
            singular: self.singular.as_ref().map(SingularTerm::negated),
            ..self.clone()
        }
    }
}
