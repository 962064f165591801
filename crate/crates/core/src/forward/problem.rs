use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{BoundaryKind, Field, Grid, OperatorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.t(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Gain of the drift term.
    pub alpha: f64,
    /// Gain of the noise term.
    pub beta: f64,
    /// Harvest efficiency.
    pub lambda0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// `b = alpha * mean(u)`
    #[default]
    Mean,
    /// `b = alpha * u`
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// `sigma = beta * mean(u)`
    Mean,
    /// `sigma = beta * u`
    #[default]
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// `f = -lambda0 * u`
    #[default]
    Multiplicative,
    /// `f = -lambda0`
    Constant,
}

/// How the unit price enters the singular reward density `h1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SingularPrice {
    /// `h1 = h10 * u - c`
    #[default]
    Proportional,
    /// `h1 = h10 - c`
    Flat,
}

/// Time discretization of the `A` term: weight 0, 1 or 1/2 on the new level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    #[default]
    Explicit,
    Implicit,
    CrankNicolson,
}

impl TimeScheme {
    pub fn theta(self) -> f64 {
        match self {
            TimeScheme::Explicit => 0.0,
            TimeScheme::Implicit => 1.0,
            TimeScheme::CrankNicolson => 0.5,
        }
    }
}

/// When the singular increment `Δξ_k` hits the state within step `k`.
///
/// `StartOfStep` adds `f(u_k) Δξ_k` to the right-hand side of the step, so
/// the noise and transport also act on mass removed in that step.
/// `EndOfStep` first advances the continuous dynamics to `v` and then jumps
/// to `v + f(v) Δξ_k`; with a multiplicative gain this keeps the state
/// positive whenever `λ₀ Δξ < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JumpTiming {
    StartOfStep,
    #[default]
    EndOfStep,
}

/// Deterministic spatial profile, evaluated at grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant { value: f64 },
    /// `offset + amplitude * sin(pi (x - x_min) / (x_max - x_min))`
    Sine { amplitude: f64, #[serde(default)] offset: f64 },
    /// One value per node, boundary nodes included.
    Values { values: Vec<f64> },
}

impl Profile {
    pub fn evaluate(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            Profile::Constant { value } => Ok(vec![*value; grid.n_nodes()]),
            Profile::Sine { amplitude, offset } => Ok(grid
                .node_positions()
                .into_iter()
                .map(|x| offset + amplitude * (std::f64::consts::PI * (x - grid.x_min) / grid.length()).sin())
                .collect()),
            Profile::Values { values } => {
                if values.len() != grid.n_nodes() {
                    return Err(Error::ShapeMismatch(format!(
                        "profile has {} values, grid has {} nodes",
                        values.len(),
                        grid.n_nodes()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

/// Boundary values, constant in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct BoundaryData {
    pub left: f64,
    pub right: f64,
}

/// Price data, one value per node.
///
/// The singular reward density is `h1 = h10 u - c` (or `h10 - c` with
/// [`SingularPrice::Flat`]); the running reward is
/// `h0 = h0_state u + h0_mean mean(u)`; the terminal reward is `g0 u(T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub h10: Vec<f64>,
    pub cost: Vec<f64>,
    pub h0_state: f64,
    pub h0_mean: f64,
    pub g0: Vec<f64>,
}

impl Prices {
    pub fn constant(grid: &Grid, h10: f64, g0: f64) -> Self {
        Self { h10: vec![h10; grid.n_nodes()], cost: vec![0.0; grid.n_nodes()], h0_state: 0.0, h0_mean: 0.0, g0: vec![g0; grid.n_nodes()] }
    }
}

/// Full description of one control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub time: TimeGrid,
    pub op: OperatorSpec,
    pub model: ModelParams,
    pub drift_mode: DriftMode,
    pub noise_mode: NoiseMode,
    pub gain_mode: GainMode,
    pub singular_price: SingularPrice,
    pub scheme: TimeScheme,
    pub jump_timing: JumpTiming,
    pub initial: Field,
    pub boundary: BoundaryData,
    pub prices: Prices,
}

impl ProblemSpec {
    /// The harvesting model on `grid` with pure diffusion `½ u''`, unit
    /// initial density, zero boundary data and constant prices.
    pub fn harvesting(grid: Grid, time: TimeGrid, model: ModelParams, theta: f64) -> Self {
        let mut initial = Field::constant(grid, 1.0);
        initial.values[0] = 0.0;
        initial.values[grid.n_cells + 1] = 0.0;
        Self {
            op: OperatorSpec::constant(&grid, 0.5, 0.0, theta),
            grid,
            time,
            model,
            drift_mode: DriftMode::Mean,
            noise_mode: NoiseMode::Pointwise,
            gain_mode: GainMode::Multiplicative,
            singular_price: SingularPrice::Proportional,
            scheme: TimeScheme::Explicit,
            jump_timing: JumpTiming::default(),
            initial,
            boundary: BoundaryData::default(),
            prices: Prices::constant(&grid, 1.0, 1.0),
        }
    }

    /// `dt * max a / h²`; the explicit scheme needs this at most 1/2.
    pub fn cfl_number(&self) -> f64 {
        self.time.dt() * self.op.max_second_order() / (self.grid.h * self.grid.h)
    }

    pub fn cfl_ok(&self) -> bool {
        self.scheme != TimeScheme::Explicit || self.cfl_number() <= 0.5
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProblem(m));
        self.op.validate(&self.grid)?;
        if !(self.time.horizon > 0.0) || self.time.n_steps == 0 {
            return bad("horizon and n_steps must be positive".into());
        }
        if !(self.model.lambda0 > 0.0) {
            return bad(format!("lambda0 must be positive, got {}", self.model.lambda0));
        }
        if self.initial.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        if self.grid.interior().any(|i| !(self.initial.values[i] > 0.0)) {
            return bad("initial density must be positive at interior nodes".into());
        }
        if !(self.boundary.left >= 0.0 && self.boundary.right >= 0.0) {
            return bad("boundary data must be nonnegative".into());
        }
        let n = self.grid.n_nodes();
        let p = &self.prices;
        if p.h10.len() != n || p.cost.len() != n || p.g0.len() != n {
            return Err(Error::ShapeMismatch("price profiles must have one value per node".into()));
        }
        if self.grid.interior().any(|i| !(p.h10[i] > 0.0) || !(p.g0[i] > 0.0)) {
            return bad("h10 and g0 must be positive".into());
        }
        Ok(())
    }

    /// Initial field with the boundary data imposed.
    pub fn initial_values(&self) -> Vec<f64> {
        let mut u = self.initial.values.clone();
        u[0] = self.boundary.left;
        let last = u.len() - 1;
        u[last] = self.boundary.right;
        u
    }

    /// `f(t, x, u)` and its state derivative.
    pub fn gain(&self, u: f64) -> (f64, f64) {
        match self.gain_mode {
            GainMode::Multiplicative => (-self.model.lambda0 * u, -self.model.lambda0),
            GainMode::Constant => (-self.model.lambda0, 0.0),
        }
    }

    /// `h1(t, x_i, u)` and its state derivative.
    pub fn singular_reward(&self, i: usize, u: f64) -> (f64, f64) {
        let (h10, c) = (self.prices.h10[i], self.prices.cost[i]);
        match self.singular_price {
            SingularPrice::Proportional => (h10 * u - c, h10),
            SingularPrice::Flat => (h10 - c, 0.0),
        }
    }

    pub fn field(&self, values: Vec<f64>) -> Field {
        Field { grid: self.grid, values, boundary: BoundaryKind::DirichletData }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::build_grid;

    fn spec() -> ProblemSpec {
        let g = build_grid(0.0, 1.0, 20).unwrap();
        ProblemSpec::harvesting(g, TimeGrid { horizon: 1.0, n_steps: 100 }, ModelParams { alpha: 0.5, beta: 0.2, lambda0: 1.0 }, 0.1)
    }

    #[test]
    fn harvesting_defaults_validate() {
        let s = spec();
        s.validate().unwrap();
        assert!((s.time.dt() - 0.01).abs() < 1e-15);
        assert_eq!(s.time.t(100), 1.0);
    }

    #[test]
    fn cfl_guard() {
        let mut s = spec();
        s.time.n_steps = 1000;
        assert!(s.cfl_ok());
        s.time.n_steps = 100;
        assert!(s.cfl_number() > 0.5);
        assert!(!s.cfl_ok());
        s.scheme = TimeScheme::Implicit;
        assert!(s.cfl_ok());
    }

    #[test]
    fn invalid_problems() {
        let mut s = spec();
        s.model.lambda0 = 0.0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.initial.values[3] = 0.0;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.prices.g0[4] = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn profiles() {
        let g = build_grid(0.0, 2.0, 3).unwrap();
        let s = Profile::Sine { amplitude: 2.0, offset: 1.0 }.evaluate(&g).unwrap();
        assert!((s[2] - 3.0).abs() < 1e-15);
        assert!(Profile::Values { values: vec![1.0; 4] }.evaluate(&g).is_err());
    }
}
