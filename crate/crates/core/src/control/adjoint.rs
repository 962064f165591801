use serde::{Deserialize, Serialize};

use crate::backward::{solve_projected, BackwardSolution, BackwardSpec, LinearDriver, MeanForm, Obstacle, SingularTerm, StepOrder};
use crate::error::Result;
use crate::forward::{DriftMode, GainMode, JumpTiming, NoiseMode, ProblemSpec, SingularControl, SingularPrice, TimeScheme};
use crate::spatial::{BoundaryKind, Field, SpaceMean};

/// Discretization choices for the adjoint equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointOptions {
    /// How the Fréchet derivative of the space mean enters the driver.
    pub mean_form: MeanForm,
    /// Either dual order selects the transpose of the forward step matching
    /// the problem's jump timing.
    pub order: StepOrder,
    /// Defaults to the forward scheme.
    pub scheme: Option<TimeScheme>,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        Self { mean_form: MeanForm::DualWeight, order: StepOrder::Standard, scheme: None }
    }
}

impl AdjointOptions {
    /// Transpose of the discrete forward scheme: the adjoint is then the
    /// exact gradient of the discrete performance functional.
    pub fn exact() -> Self {
        Self { mean_form: MeanForm::Transpose, order: StepOrder::Dual, scheme: None }
    }
}

/// Backward problem for the adjoint pair `(p, q)` along a control.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointSpec {
    pub backward: BackwardSpec,
    pub options: AdjointOptions,
}

impl AdjointSpec {
    /// Solves the (unreflected unless an obstacle was attached) adjoint.
    pub fn solve(&self) -> Result<BackwardSolution> {
        solve_projected(&self.backward)
    }
}

pub fn assemble_adjoint(spec: &ProblemSpec, xi: &SingularControl) -> Result<AdjointSpec> {
    assemble_adjoint_with(spec, xi, AdjointOptions::default())
}

/// Driver `∂_u H₀ + (mean adjoint) ∂_ū H₀`, singular term `∂_u H₁` against
/// `ξ`, terminal `g₀` and zero boundary data. Every supported model is
/// affine in `(u, ū)`, so all coefficients are state-free.
pub fn assemble_adjoint_with(spec: &ProblemSpec, xi: &SingularControl, options: AdjointOptions) -> Result<AdjointSpec> {
    spec.validate()?;
    let g = spec.grid;
    let m = spec.model;
    let mean = SpaceMean::new(&g, spec.op.theta)?;
    let weight = crate::spatial::space_mean_dual_weight(&g, spec.op.theta)?.values;
    let h0_mean = options.mean_form.apply(&mean, &weight, &vec![spec.prices.h0_mean; g.n_nodes()]);
    let mut constant: Vec<f64> = h0_mean.iter().map(|v| spec.prices.h0_state + v).collect();
    constant[0] = 0.0;
    constant[g.n_nodes() - 1] = 0.0;
    let (y, y_mean) = match spec.drift_mode {
        DriftMode::Mean => (0.0, m.alpha),
        DriftMode::Pointwise => (m.alpha, 0.0),
    };
    let (z, z_mean) = match spec.noise_mode {
        NoiseMode::Mean => (0.0, m.beta),
        NoiseMode::Pointwise => (m.beta, 0.0),
    };
    let driver = LinearDriver { constant, y, y_mean, z, z_mean, mean_form: options.mean_form };

    let slope = match spec.gain_mode {
        GainMode::Multiplicative => -m.lambda0,
        GainMode::Constant => 0.0,
    };
    let offset: Vec<f64> = match spec.singular_price {
        SingularPrice::Proportional => spec.prices.h10.clone(),
        SingularPrice::Flat => vec![0.0; g.n_nodes()],
    };
    let singular = (!xi.is_zero() && (slope != 0.0 || offset.iter().any(|v| *v != 0.0))).then(|| SingularTerm {
        increments: xi.increments().to_vec(),
        offset,
        slope: vec![slope; g.n_nodes()],
    });
    let mut terminal = Field { grid: g, values: spec.prices.g0.clone(), boundary: BoundaryKind::DirichletZero };
    terminal.values[0] = 0.0;
    terminal.values[g.n_nodes() - 1] = 0.0;
    let backward = BackwardSpec {
        grid: g,
        time: spec.time,
        op: spec.op.clone(),
        adjoint: true,
        driver,
        terminal,
        obstacle: Obstacle::None,
        side: Default::default(),
        singular,
        scheme: options.scheme.unwrap_or(spec.scheme),
        order: match (options.order, spec.jump_timing) {
            (StepOrder::Standard, _) => StepOrder::Standard,
            (_, JumpTiming::StartOfStep) => StepOrder::Dual,
            (_, JumpTiming::EndOfStep) => StepOrder::DualSplit,
        },
    };
    backward.validate()?;
    Ok(AdjointSpec { backward, options })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ModelParams, TimeGrid};
    use crate::spatial::build_grid;

    fn spec(alpha: f64, beta: f64) -> ProblemSpec {
        let g = build_grid(0.0, 1.0, 40).unwrap();
        let mut s = ProblemSpec::harvesting(g, TimeGrid { horizon: 0.05, n_steps: 200 }, ModelParams { alpha, beta, lambda0: 1.0 }, 0.1);
        s.scheme = TimeScheme::Implicit;
        s
    }

    #[test]
    fn backward_heat_with_unit_terminal() {
        let s = spec(0.0, 0.0);
        let adj = assemble_adjoint(&s, &SingularControl::zero(200, 40)).unwrap();
        assert!(adj.backward.singular.is_none());
        let p = adj.solve().unwrap();
        // sup of the absorbed mass 1 - P(exit before T - t) is tiny away from the boundary
        let g = s.grid;
        for k in [190, 199] {
            for i in g.interior().filter(|&i| (g.x(i) - 0.5).abs() < 0.25) {
                assert!((p.y.at(k)[i] - 1.0).abs() < 1e-3, "{k} {i} {}", p.y.at(k)[i]);
            }
        }
        assert_eq!(p.y.at(200)[1], 1.0);
    }

    #[test]
    fn mean_drift_uses_unit_dual_weight_inside() {
        let s = spec(1.0, 0.2);
        let adj = assemble_adjoint(&s, &SingularControl::zero(200, 40)).unwrap();
        let d = &adj.backward.driver;
        assert_eq!((d.y, d.y_mean, d.z, d.z_mean), (0.0, 1.0, 0.2, 0.0));
        assert_eq!(d.mean_form, MeanForm::DualWeight);
        let w = crate::spatial::space_mean_dual_weight(&s.grid, 0.1).unwrap();
        assert_eq!(w.values[20], 1.0);
    }

    #[test]
    fn singular_term_follows_gain_and_price() {
        let mut s = spec(0.0, 0.0);
        let xi = SingularControl::constant_rate(200, 40, 0.5, s.time.dt()).unwrap();
        let t = assemble_adjoint(&s, &xi).unwrap().backward.singular.unwrap();
        assert_eq!(t.slope[5], -1.0);
        assert_eq!(t.offset[5], 1.0);
        s.gain_mode = GainMode::Constant;
        s.singular_price = SingularPrice::Flat;
        assert!(assemble_adjoint(&s, &xi).unwrap().backward.singular.is_none());
    }
}
