use serde::Serialize;

use super::performance::{performance_samples, Estimate};
use crate::error::Result;
use crate::forward::{ProblemSpec, SingularControl};

/// Comparison control for the optimality stress test.
#[derive(Debug, Clone, PartialEq)]
pub struct StressControl {
    pub name: String,
    pub control: SingularControl,
}

/// `ξ̂/2`, `ξ̂` delayed by a tenth of the horizon, `ξ̂` on the left half of the
/// domain, no harvest, and a constant rate matching `ξ̂`'s average effort.
pub fn stress_family(spec: &ProblemSpec, xi_hat: &SingularControl) -> Result<Vec<StressControl>> {
    let (g, n, dt) = (spec.grid, spec.time.n_steps, spec.time.dt());
    let shift = (n / 10).max(1);
    let inc = xi_hat.increments();
    let shifted: Vec<Vec<f64>> = (0..n).map(|k| if k >= shift { inc[k - shift].clone() } else { vec![0.0; g.n_cells] }).collect();
    let mid = 0.5 * (g.x_min + g.x_max);
    let masked: Vec<Vec<f64>> = inc.iter().map(|r| r.iter().enumerate().map(|(j, d)| if g.x(j + 1) <= mid { *d } else { 0.0 }).collect()).collect();
    let total: f64 = inc.iter().flatten().sum();
    let mean_rate = total / (n * g.n_cells) as f64 / dt;
    // keep λ₀·Δξ ≤ 1/2 per step
    let rate = if mean_rate > 0.0 { mean_rate.min(0.5 / (spec.model.lambda0 * dt)) } else { 0.1 };
    Ok(vec![
        StressControl { name: "half".into(), control: xi_hat.scaled(0.5)? },
        StressControl { name: "delayed".into(), control: SingularControl::from_increments(shifted)? },
        StressControl { name: "left_half".into(), control: SingularControl::from_increments(masked)? },
        StressControl { name: "zero".into(), control: SingularControl::zero(n, g.n_cells) },
        StressControl { name: "constant_rate".into(), control: SingularControl::constant_rate(n, g.n_cells, rate, dt)? },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub value: Estimate,
    /// Paired `J(ξ̂) - J(ξ_j)` on common paths.
    pub advantage: Estimate,
    /// `J(ξ̂) ≥ J(ξ_j) - 3·stderr` with the paired standard error.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub candidate: Estimate,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

/// Estimates `J` for the candidate and every comparison control on the same
/// seeds.
pub fn compare_controls(spec: &ProblemSpec, candidate: &SingularControl, family: &[StressControl], n_paths: usize, seed: u64) -> Result<Comparison> {
    let base = performance_samples(spec, candidate, n_paths, seed)?;
    let rows = family
        .iter()
        .map(|c| {
            let other = performance_samples(spec, &c.control, n_paths, seed)?;
            let advantage = Estimate::paired(&base, &other);
            Ok(ComparisonRow {
                name: c.name.clone(),
                value: Estimate::from_samples(&other),
                passed: advantage.estimate >= -3.0 * advantage.stderr,
                advantage,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Comparison { candidate: Estimate::from_samples(&base), rows })
}
