use serde::{Deserialize, Serialize};

use super::adjoint::{assemble_adjoint_with, AdjointOptions};
use crate::backward::{solve_projected, solve_reflected, BackwardSolution, MeanForm, Obstacle, Side, StepOrder};
use crate::error::{Error, Result};
use crate::forward::{simulate_jump_sites, simulate_path, FieldPath, GainMode, NoisePath, ProblemSpec, SingularControl, SingularPrice};

/// Floor on the singular coefficient `λ₀|L - s|` when reading `ξ̂` off `η`.
pub const COEFFICIENT_FLOOR: f64 = 1e-10;
/// Per-step harvest is capped at `(1 - HARVEST_MARGIN)/λ₀`, keeping
/// `λ₀ Δξ < 1`.
pub const HARVEST_MARGIN: f64 = 1e-9;

/// Which side of the threshold `h₁₀/λ₀` the adjoint is held on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyConvention {
    /// `p ≥ h₁₀/λ₀`: harvest where the marginal value of a unit left in place
    /// would fall below the harvest price. This is the value-maximizing rule
    /// (`f p + h₁ ≤ 0`).
    #[default]
    ValueAboveThreshold,
    /// `p ≤ h₁₀/λ₀`, harvesting on the contact set from below.
    ValueBelowThreshold,
}

impl PolicyConvention {
    pub fn side(self) -> Side {
        match self {
            PolicyConvention::ValueAboveThreshold => Side::Lower,
            PolicyConvention::ValueBelowThreshold => Side::Upper,
        }
    }

    /// Signed slack that must be `≤ 0`.
    fn slack(self, lambda0: f64, h10: f64, p: f64) -> f64 {
        match self {
            PolicyConvention::ValueAboveThreshold => h10 - lambda0 * p,
            PolicyConvention::ValueBelowThreshold => lambda0 * p - h10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub slack: f64,
    pub complementarity: f64,
    pub vi: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { slack: 1e-6, complementarity: 1e-6, vi: 1e-6 }
    }
}

/// Residuals of the first-order conditions for a control and its adjoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MPReport {
    pub convention: PolicyConvention,
    /// `max(0, max slack)` of the convention's threshold condition.
    pub slack_violation: f64,
    /// `|Σ slack·Δξ·h|`.
    pub complementarity_residual: f64,
    /// `max |max{±(p - h₁₀/λ₀), -Δξ}|` with the convention's sign.
    pub vi_residual: f64,
    /// `max(0, max (f p + h₁))`: the directional-derivative density itself,
    /// evaluated on the supplied state path.
    pub gradient_violation: f64,
    /// `|Σ (f p + h₁)·Δξ·h|`.
    pub gradient_complementarity: f64,
    pub slack_ok: bool,
    pub complementarity_ok: bool,
    pub vi_ok: bool,
    pub tolerances: Tolerances,
}

impl MPReport {
    pub fn passed(&self) -> bool {
        self.slack_ok && self.complementarity_ok && self.vi_ok
    }
}

/// Evaluates the threshold conditions on the adjoint values `p` along the
/// pre-jump states `u`; both are indexed like the control (`p.at(k)` and
/// `u.at(k)` are paired with `Δξ_k`).
pub fn check_necessary(
    p: &FieldPath,
    u: &FieldPath,
    xi: &SingularControl,
    spec: &ProblemSpec,
    tolerances: Tolerances,
    convention: PolicyConvention,
) -> Result<MPReport> {
    let (g, n) = (spec.grid, spec.time.n_steps);
    if p.len() < n || u.len() < n || xi.n_steps() != n || xi.n_cells() != g.n_cells {
        return Err(Error::ShapeMismatch("adjoint, state and control must share the time grid".into()));
    }
    let lambda0 = spec.model.lambda0;
    let (mut slack_max, mut comp, mut vi, mut grad_max, mut grad_comp) = (f64::NEG_INFINITY, 0.0, 0.0_f64, f64::NEG_INFINITY, 0.0);
    for k in 0..n {
        let (pk, uk, d) = (p.at(k), u.at(k), xi.step(k));
        for i in g.interior() {
            let h10 = spec.prices.h10[i];
            let dxi = d[i - 1];
            let s = convention.slack(lambda0, h10, pk[i]);
            slack_max = slack_max.max(s);
            comp += s * dxi * g.h;
            let gap = s / lambda0;
            vi = vi.max(gap.max(-dxi).abs());
            let density = spec.gain(uk[i]).0 * pk[i] + spec.singular_reward(i, uk[i]).0;
            grad_max = grad_max.max(density);
            grad_comp += density * dxi * g.h;
        }
    }
    let slack_violation = slack_max.max(0.0);
    let complementarity_residual = comp.abs();
    Ok(MPReport {
        convention,
        slack_violation,
        complementarity_residual,
        vi_residual: vi,
        gradient_violation: grad_max.max(0.0),
        gradient_complementarity: grad_comp.abs(),
        slack_ok: slack_violation <= tolerances.slack,
        complementarity_ok: complementarity_residual <= tolerances.complementarity,
        vi_ok: vi <= tolerances.vi,
        tolerances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyOptions {
    #[serde(default)]
    pub convention: PolicyConvention,
    /// Penalty levels for the reflected solve; `None` projects exactly.
    #[serde(default)]
    pub levels: Option<Vec<u64>>,
    #[serde(default = "transpose")]
    pub mean_form: MeanForm,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn transpose() -> MeanForm {
    MeanForm::Transpose
}

impl Default for PolicyOptions {
    fn default() -> Self {
        Self { convention: PolicyConvention::default(), levels: None, mean_form: MeanForm::Transpose, tolerances: Tolerances::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyResult {
    pub xi_hat: SingularControl,
    /// Reflected adjoint.
    pub reflected: BackwardSolution,
    /// Adjoint recomputed along `ξ̂` without reflection.
    pub realized: BackwardSolution,
    /// Noise-free state under `ξ̂`, which is the mean state for these linear models.
    pub mean_state: FieldPath,
    pub report: MPReport,
    /// Some reflection increment met a singular coefficient below the floor;
    /// the raw increment was used there.
    pub degenerate: bool,
}

/// Threshold policy read off the reflected adjoint.
///
/// The adjoint is solved in the dual step order with the obstacle
/// `h₁₀/λ₀`; where the transported value `s` is pushed by `Δη`, the harvest
/// increment is `Δη / (λ₀ |h₁₀/λ₀ - s|)`, so that the control's own singular
/// term reproduces the reflection.
pub fn extract_policy(spec: &ProblemSpec, options: &PolicyOptions) -> Result<PolicyResult> {
    if spec.gain_mode != GainMode::Multiplicative || spec.singular_price != SingularPrice::Proportional || spec.prices.cost.iter().any(|c| *c != 0.0) {
        return Err(Error::InvalidProblem("threshold policies need multiplicative gain, proportional price and zero cost".into()));
    }
    let (g, n) = (spec.grid, spec.time.n_steps);
    let lambda0 = spec.model.lambda0;
    let adjoint_options = AdjointOptions { mean_form: options.mean_form, order: StepOrder::Dual, scheme: None };
    let mut adj = assemble_adjoint_with(spec, &SingularControl::zero(n, g.n_cells), adjoint_options)?.backward;
    let threshold: Vec<f64> = spec.prices.h10.iter().map(|h| h / lambda0).collect();
    adj.obstacle = Obstacle::Static { values: threshold.clone() };
    adj.side = options.convention.side();
    let reflected = match &options.levels {
        None => solve_projected(&adj)?,
        Some(levels) => solve_reflected(&adj, levels)?,
    };

    let cap = (1.0 - HARVEST_MARGIN) / lambda0;
    let mut degenerate = false;
    let increments: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            g.interior()
                .map(|i| {
                    let deta = reflected.eta.at(k + 1)[i] - reflected.eta.at(k)[i];
                    if deta <= 0.0 {
                        return 0.0;
                    }
                    let coef = lambda0 * (threshold[i] - reflected.transported.at(k)[i]).abs();
                    if coef < COEFFICIENT_FLOOR {
                        degenerate = true;
                        return deta.min(cap);
                    }
                    (deta / coef).min(cap)
                })
                .collect()
        })
        .collect();
    let xi_hat = SingularControl::from_increments(increments)?;

    let realized = assemble_adjoint_with(spec, &xi_hat, adjoint_options)?.solve()?;
    let calm = NoisePath::zero(n, spec.time.dt());
    let mean_state = simulate_path(spec, &xi_hat, &calm)?;
    let sites = simulate_jump_sites(spec, &xi_hat, &calm)?;
    let report = check_necessary(&realized.contact, &sites, &xi_hat, spec, options.tolerances, options.convention)?;
    Ok(PolicyResult { xi_hat, reflected, realized, mean_state, report, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ModelParams, Prices, TimeGrid, TimeScheme};
    use crate::spatial::build_grid;

    fn spec(g0: f64) -> ProblemSpec {
        let g = build_grid(0.0, 1.0, 20).unwrap();
        let mut s = ProblemSpec::harvesting(g, TimeGrid { horizon: 1.0, n_steps: 100 }, ModelParams { alpha: 0.5, beta: 0.2, lambda0: 1.0 }, 0.1);
        s.prices = Prices::constant(&g, 1.0, g0);
        s.scheme = TimeScheme::Implicit;
        s
    }

    #[test]
    fn inactive_threshold_means_no_harvest() {
        let s = spec(0.3);
        let opts = PolicyOptions { convention: PolicyConvention::ValueBelowThreshold, ..Default::default() };
        let r = extract_policy(&s, &opts).unwrap();
        assert!(r.xi_hat.is_zero());
        assert_eq!(r.realized.y, r.reflected.y);
        assert!(r.report.passed());
    }

    #[test]
    fn terminal_above_threshold_is_clipped_first() {
        let s = spec(2.0);
        let opts = PolicyOptions { convention: PolicyConvention::ValueBelowThreshold, ..Default::default() };
        let r = extract_policy(&s, &opts).unwrap();
        let last = r.xi_hat.step(99);
        assert!(last[4..16].iter().all(|d| *d > 0.0));
        assert!(r.reflected.contact.at(99)[10] <= 1.0 + 1e-12);
        assert!(r.report.vi_residual <= 1e-6, "{:?}", r.report);
        let p = &r.reflected.contact;
        assert!(p.fields[..100].iter().all(|f| s.grid.interior().all(|i| f.values[i] <= 1.0 + 1e-12)));
    }

    #[test]
    fn value_above_threshold_policy_is_consistent() {
        let s = spec(0.8);
        let r = extract_policy(&s, &PolicyOptions::default()).unwrap();
        assert!(!r.xi_hat.is_zero());
        assert!(r.report.passed(), "{:?}", r.report);
        assert!(!r.degenerate);
        // harvest only on the contact set
        for k in 0..100 {
            for (j, d) in r.xi_hat.step(k).iter().enumerate() {
                if *d > 0.0 {
                    assert!((r.realized.contact.at(k)[j + 1] - 1.0).abs() < 1e-6);
                }
            }
        }
        assert!(r.report.gradient_violation <= 1e-6);
    }

    #[test]
    fn constructed_violation() {
        let s = spec(0.8);
        let n = s.time.n_steps;
        let mut p = simulate_path(&s, &SingularControl::zero(n, 20), &NoisePath::zero(n, 0.01)).unwrap();
        let u = p.clone();
        for f in p.fields.iter_mut() {
            f.values.iter_mut().for_each(|v| *v = 0.5);
        }
        p.fields[10].values[7] = 1.1;
        let r = check_necessary(&p, &u, &SingularControl::zero(n, 20), &s, Tolerances::default(), PolicyConvention::ValueBelowThreshold).unwrap();
        assert!((r.slack_violation - 0.1).abs() < 1e-12);
        assert!(r.complementarity_ok && !r.slack_ok);
    }

    #[test]
    fn rejects_nonthreshold_models() {
        let mut s = spec(0.8);
        s.gain_mode = GainMode::Constant;
        assert!(extract_policy(&s, &PolicyOptions::default()).is_err());
    }
}
