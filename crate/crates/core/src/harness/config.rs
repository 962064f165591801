use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backward::{BackwardSpec, Extrapolation, Obstacle, Side};
use crate::control::{extract_policy, PolicyConvention, PolicyOptions};
use crate::error::{Error, Result};
use crate::forward::{
    BoundaryData, DriftMode, GainMode, JumpTiming, ModelParams, NoiseMode, Prices, ProblemSpec, Profile, SingularControl,
    SingularPrice, TimeGrid, TimeScheme,
};
use crate::spatial::{build_grid, BoundaryKind, Field, OperatorSpec};

use super::suites::Suite;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub horizon: f64,
    pub n_steps: usize,
    pub scheme: TimeScheme,
    pub jump_timing: JumpTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda0: f64,
    /// Averaging radius of the space mean.
    pub theta: f64,
    pub second_order: f64,
    pub first_order: f64,
    pub drift_mode: DriftMode,
    pub noise_mode: NoiseMode,
    pub gain_mode: GainMode,
    pub singular_price: SingularPrice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriceConfig {
    pub h10: f64,
    pub cost: f64,
    pub h0_state: f64,
    pub h0_mean: f64,
    pub g0: f64,
}

/// Control the forward runs use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlConfig {
    #[default]
    Zero,
    ConstantRate { rate: f64 },
    /// The threshold policy extracted from the reflected adjoint.
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub model: ModelConfig,
    pub initial: Profile,
    pub boundary: BoundaryData,
    pub prices: PriceConfig,
    pub control: ControlConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Deterministic,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackwardConfig {
    pub grid: GridConfig,
    pub horizon: f64,
    pub n_steps: usize,
    pub second_order: f64,
    pub first_order: f64,
    pub theta: f64,
    pub scheme: TimeScheme,
    pub terminal: Profile,
    pub obstacle: Option<Profile>,
    pub side: Side,
    pub levels: Vec<u64>,
    pub extrapolation: Extrapolation,
    pub backend: Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub convention: PolicyConvention,
    /// Penalty levels for the reflected adjoint; empty projects exactly.
    pub levels: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Root seed; path `j` uses `seed + j`.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_paths() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// Bounds used by the verification checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckTolerances {
    pub slope_min: f64,
    pub slope_max: f64,
    pub skorokhod: f64,
    pub contraction_factor: f64,
    pub duality: f64,
    pub dual_weight: f64,
    pub analytic: f64,
    pub refinement_ratio: f64,
    pub psor: f64,
    pub derivative_ratio_min: f64,
    pub derivative_ratio_max: f64,
    pub std_errors: f64,
    pub maximum_principle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    pub problem: ProblemConfig,
    pub backward: BackwardConfig,
    pub policy: PolicyConfig,
    pub mc: McConfig,
    pub outputs: OutputConfig,
    pub tolerances: CheckTolerances,
    pub suite: Option<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_min: 0.0, x_max: 1.0, n_cells: 20 }
    }
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { horizon: 1.0, n_steps: 100, scheme: TimeScheme::Implicit, jump_timing: JumpTiming::default() }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.2,
            lambda0: 1.0,
            theta: 0.1,
            second_order: 0.5,
            first_order: 0.0,
            drift_mode: DriftMode::default(),
            noise_mode: NoiseMode::default(),
            gain_mode: GainMode::default(),
            singular_price: SingularPrice::default(),
        }
    }
}

impl Default for PriceConfig {
    fn default() -> Self {
        Self { h10: 1.0, cost: 0.0, h0_state: 0.0, h0_mean: 0.0, g0: 0.8 }
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            model: ModelConfig::default(),
            initial: Profile::Constant { value: 1.0 },
            boundary: BoundaryData::default(),
            prices: PriceConfig::default(),
            control: ControlConfig::default(),
        }
    }
}

impl Default for BackwardConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig { x_min: 0.0, x_max: 1.0, n_cells: 100 },
            horizon: 0.5,
            n_steps: 400,
            second_order: 0.5,
            first_order: 0.0,
            theta: 0.1,
            scheme: TimeScheme::Implicit,
            terminal: Profile::Sine { amplitude: 1.0, offset: 0.0 },
            obstacle: Some(Profile::Sine { amplitude: 0.6, offset: 0.0 }),
            side: Side::Lower,
            levels: vec![4, 8, 16, 32, 64, 128, 256],
            extrapolation: Extrapolation::default(),
            backend: Backend::default(),
        }
    }
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { convention: PolicyConvention::default(), levels: Vec::new() }
    }
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_paths: default_paths(), seed: Some(1) }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "smc-out".into(), formats: vec![Format::Json, Format::Csv] }
    }
}

impl Default for CheckTolerances {
    fn default() -> Self {
        Self {
            slope_min: -2.3,
            slope_max: -1.7,
            skorokhod: 1e-4,
            contraction_factor: 10.0,
            duality: 1e-10,
            dual_weight: 1e-12,
            analytic: 2e-3,
            refinement_ratio: 3.0,
            psor: 5e-3,
            derivative_ratio_min: 5.0,
            derivative_ratio_max: 20.0,
            std_errors: 3.0,
            maximum_principle: 1e-6,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            problem: ProblemConfig::default(),
            backward: BackwardConfig::default(),
            policy: PolicyConfig::default(),
            mc: McConfig::default(),
            outputs: OutputConfig::default(),
            tolerances: CheckTolerances::default(),
            suite: None,
        }
    }
}

/// A validated configuration with its assembled problems.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub config: RunConfig,
    pub problem: ProblemSpec,
    pub backward: BackwardSpec,
    /// Derived mesh sizes of the forward problem.
    pub h: f64,
    pub dt: f64,
    pub warnings: Vec<String>,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Validation { field: field.into(), message: message.into() }
}

fn ensure(ok: bool, field: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(invalid(field, message))
    }
}

fn positive(v: f64, field: &str) -> Result<()> {
    ensure(v > 0.0 && v.is_finite(), field, format!("must be positive and finite, got {v}"))
}

fn finite(v: f64, field: &str) -> Result<()> {
    ensure(v.is_finite(), field, format!("must be finite, got {v}"))
}

fn check_grid(g: &GridConfig, prefix: &str) -> Result<()> {
    finite(g.x_min, &format!("{prefix}.x_min"))?;
    ensure(g.x_max.is_finite() && g.x_max > g.x_min, &format!("{prefix}.x_max"), "must exceed x_min")?;
    ensure(g.n_cells >= 2, &format!("{prefix}.n_cells"), "need at least 2 interior nodes")
}

fn check_theta(theta: f64, g: &GridConfig, field: &str) -> Result<()> {
    positive(theta, field)?;
    ensure(theta < g.x_max - g.x_min, field, "must be smaller than the domain length")
}

fn check_levels(levels: &[u64], field: &str, allow_empty: bool) -> Result<()> {
    ensure(allow_empty || !levels.is_empty(), field, "at least one level is required")?;
    ensure(levels.iter().all(|n| *n > 0), field, "levels must be positive")?;
    ensure(levels.windows(2).all(|w| w[0] < w[1]), field, "levels must be strictly increasing")
}

fn profile_values(p: &Profile, grid: &crate::spatial::Grid, field: &str) -> Result<Vec<f64>> {
    let v = p.evaluate(grid).map_err(|e| invalid(field, e.to_string()))?;
    ensure(v.iter().all(|x| x.is_finite()), field, "values must be finite")?;
    Ok(v)
}

impl RunConfig {
    /// Seed for stochastic runs; fails naming `mc.seed` when absent.
    pub fn seed(&self) -> Result<u64> {
        self.mc.seed.ok_or_else(|| invalid("mc.seed", "a seed is required for stochastic runs"))
    }

    pub fn validate(self) -> Result<Validated> {
        let mut warnings = Vec::new();
        ensure(self.version == CONFIG_VERSION, "version", format!("unsupported version {}, expected {CONFIG_VERSION}", self.version))?;

        let p = &self.problem;
        check_grid(&p.grid, "problem.grid")?;
        positive(p.time.horizon, "problem.time.horizon")?;
        ensure(p.time.n_steps >= 1, "problem.time.n_steps", "must be at least 1")?;
        let m = &p.model;
        finite(m.alpha, "problem.model.alpha")?;
        finite(m.beta, "problem.model.beta")?;
        positive(m.lambda0, "problem.model.lambda0")?;
        check_theta(m.theta, &p.grid, "problem.model.theta")?;
        ensure(m.second_order >= 0.0 && m.second_order.is_finite(), "problem.model.second_order", "must be non-negative")?;
        finite(m.first_order, "problem.model.first_order")?;
        for (v, f) in [(p.prices.h10, "h10"), (p.prices.cost, "cost"), (p.prices.h0_state, "h0_state"), (p.prices.h0_mean, "h0_mean"), (p.prices.g0, "g0")] {
            finite(v, &format!("problem.prices.{f}"))?;
        }
        finite(p.boundary.left, "problem.boundary.left")?;
        finite(p.boundary.right, "problem.boundary.right")?;

        let grid = build_grid(p.grid.x_min, p.grid.x_max, p.grid.n_cells).map_err(|e| invalid("problem.grid", e.to_string()))?;
        let time = TimeGrid { horizon: p.time.horizon, n_steps: p.time.n_steps };
        let mut initial = profile_values(&p.initial, &grid, "problem.initial")?;
        initial[0] = p.boundary.left;
        initial[grid.n_cells + 1] = p.boundary.right;
        let n = grid.n_nodes();
        let problem = ProblemSpec {
            grid,
            time,
            op: OperatorSpec::constant(&grid, m.second_order, m.first_order, m.theta),
            model: ModelParams { alpha: m.alpha, beta: m.beta, lambda0: m.lambda0 },
            drift_mode: m.drift_mode,
            noise_mode: m.noise_mode,
            gain_mode: m.gain_mode,
            singular_price: m.singular_price,
            scheme: p.time.scheme,
            jump_timing: p.time.jump_timing,
            initial: Field { grid, values: initial, boundary: BoundaryKind::DirichletData },
            boundary: p.boundary,
            prices: Prices {
                h10: vec![p.prices.h10; n],
                cost: vec![p.prices.cost; n],
                h0_state: p.prices.h0_state,
                h0_mean: p.prices.h0_mean,
                g0: vec![p.prices.g0; n],
            },
        };
        let cfl = problem.cfl_number();
        if cfl > 0.5 {
            let msg = format!("dt*max(a)/h^2 = {cfl:.3} exceeds 1/2");
            ensure(p.time.scheme != TimeScheme::Explicit, "problem.time.n_steps", format!("{msg}; explicit stepping is unstable, refine time or choose an implicit scheme"))?;
            warnings.push(format!("problem.time.n_steps: {msg}; proceeding with {:?} stepping", p.time.scheme));
        }
        if let ControlConfig::ConstantRate { rate } = p.control {
            ensure(rate >= 0.0 && rate.is_finite(), "problem.control.rate", "must be non-negative")?;
            if m.gain_mode == GainMode::Multiplicative && m.lambda0 * rate * time.dt() >= 1.0 {
                warnings.push("problem.control.rate: lambda0*dxi >= 1 per step, positivity is not guaranteed".into());
            }
        }

        let b = &self.backward;
        check_grid(&b.grid, "backward.grid")?;
        positive(b.horizon, "backward.horizon")?;
        ensure(b.n_steps >= 1, "backward.n_steps", "must be at least 1")?;
        ensure(b.second_order >= 0.0 && b.second_order.is_finite(), "backward.second_order", "must be non-negative")?;
        finite(b.first_order, "backward.first_order")?;
        check_theta(b.theta, &b.grid, "backward.theta")?;
        check_levels(&b.levels, "backward.levels", false)?;
        check_levels(&self.policy.levels, "policy.levels", true)?;
        let backward = b.build(b.grid.n_cells, b.n_steps)?;

        ensure(self.mc.n_paths >= 1, "mc.n_paths", "must be at least 1")?;
        ensure(!self.outputs.directory.is_empty(), "outputs.directory", "must not be empty")?;
        let t = &self.tolerances;
        for (v, f) in [
            (t.skorokhod, "skorokhod"),
            (t.contraction_factor, "contraction_factor"),
            (t.duality, "duality"),
            (t.dual_weight, "dual_weight"),
            (t.analytic, "analytic"),
            (t.refinement_ratio, "refinement_ratio"),
            (t.psor, "psor"),
            (t.derivative_ratio_min, "derivative_ratio_min"),
            (t.derivative_ratio_max, "derivative_ratio_max"),
            (t.std_errors, "std_errors"),
            (t.maximum_principle, "maximum_principle"),
        ] {
            positive(v, &format!("tolerances.{f}"))?;
        }
        ensure(t.slope_min.is_finite() && t.slope_min < t.slope_max, "tolerances.slope_min", "must be below slope_max")?;
        ensure(t.derivative_ratio_min < t.derivative_ratio_max, "tolerances.derivative_ratio_min", "must be below derivative_ratio_max")?;
        if let Some(s) = &self.suite {
            s.parse::<Suite>().map_err(|m| invalid("suite", m))?;
        }

        let (h, dt) = (grid.h, time.dt());
        Ok(Validated { config: self, problem, backward, h, dt, warnings })
    }
}

impl BackwardConfig {
    /// The configured backward problem on `n_cells` interior nodes and
    /// `n_steps` time steps.
    pub fn build(&self, n_cells: usize, n_steps: usize) -> Result<BackwardSpec> {
        let grid = build_grid(self.grid.x_min, self.grid.x_max, n_cells).map_err(|e| invalid("backward.grid", e.to_string()))?;
        let terminal = Field { grid, values: profile_values(&self.terminal, &grid, "backward.terminal")?, boundary: BoundaryKind::DirichletData };
        let mut spec = BackwardSpec::new(
            OperatorSpec::constant(&grid, self.second_order, self.first_order, self.theta),
            terminal,
            TimeGrid { horizon: self.horizon, n_steps },
        );
        spec.scheme = self.scheme;
        if let Some(o) = &self.obstacle {
            spec = spec.with_obstacle(Obstacle::Static { values: profile_values(o, &grid, "backward.obstacle")? }, self.side);
        }
        spec.validate().map_err(|e| invalid("backward", e.to_string()))?;
        Ok(spec)
    }
}

impl Validated {
    pub fn policy_options(&self) -> PolicyOptions {
        let levels = &self.config.policy.levels;
        PolicyOptions { convention: self.config.policy.convention, levels: (!levels.is_empty()).then(|| levels.clone()), ..Default::default() }
    }

    /// The control named by `problem.control`.
    pub fn control(&self) -> Result<SingularControl> {
        let (n, cells) = (self.problem.time.n_steps, self.problem.grid.n_cells);
        match self.config.problem.control {
            ControlConfig::Zero => Ok(SingularControl::zero(n, cells)),
            ControlConfig::ConstantRate { rate } => SingularControl::constant_rate(n, cells, rate, self.dt),
            ControlConfig::Policy => Ok(extract_policy(&self.problem, &self.policy_options())?.xi_hat),
        }
    }
}

/// Parses JSON text; type errors and unknown keys name the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() || inner.is_io() {
            Error::Parse(inner.to_string())
        } else {
            let field = if path == "." { "<root>".to_string() } else { path };
            invalid(&field, inner.to_string())
        }
    })
}

pub fn load_config(path: &Path) -> Result<Validated> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)?.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Validation { field, .. } => field,
            e => panic!("expected a validation error, got {e:?}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let v = parse_config("{}").unwrap().validate().unwrap();
        assert_eq!(v.config, RunConfig::default());
        assert_eq!(v.config.tolerances, CheckTolerances::default());
        assert!((v.h - 1.0 / 21.0).abs() < 1e-15 && (v.dt - 0.01).abs() < 1e-15);
        assert!(v.warnings.iter().any(|w| w.contains("n_steps")));
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config(r#"{"problem": {"modle": {}}}"#).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("modle"), "{msg}");
        assert_eq!(field_of(e), "problem.modle");
    }

    #[test]
    fn negative_theta_names_the_field() {
        let e = parse_config(r#"{"problem": {"model": {"theta": -0.1}}}"#).unwrap().validate().unwrap_err();
        assert!(e.to_string().contains("model.theta"));
    }

    #[test]
    fn type_errors_carry_the_path() {
        let e = parse_config(r#"{"mc": {"n_paths": "many"}}"#).unwrap_err();
        assert_eq!(field_of(e), "mc.n_paths");
        assert!(matches!(parse_config("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn explicit_cfl_violation_is_an_error() {
        let mut c = RunConfig::default();
        c.problem.time.scheme = TimeScheme::Explicit;
        assert_eq!(field_of(c.clone().validate().unwrap_err()), "problem.time.n_steps");
        c.problem.time.n_steps = 1000;
        assert!(c.validate().unwrap().warnings.is_empty());
    }

    #[test]
    fn seed_is_required_when_an_mc_block_omits_it() {
        let c = parse_config(r#"{"mc": {"n_paths": 10}}"#).unwrap();
        assert_eq!(field_of(c.seed().unwrap_err()), "mc.seed");
        assert_eq!(RunConfig::default().seed().unwrap(), 1);
    }

    #[test]
    fn bad_levels_and_suite() {
        let mut c = RunConfig::default();
        c.backward.levels = vec![8, 4];
        assert_eq!(field_of(c.validate().unwrap_err()), "backward.levels");
        let mut c = RunConfig::default();
        c.suite = Some("everything".into());
        assert_eq!(field_of(c.validate().unwrap_err()), "suite");
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
