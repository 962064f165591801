use serde::Serialize;

use super::performance::{path_value, Estimate};
use crate::error::{Error, Result};
use crate::forward::{par_map_paths, simulate_events, Event, FieldPath, NoisePath, Perturbation, ProblemSpec, SingularControl};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteDifference {
    pub eps: f64,
    /// `(J(ξ + εζ) - J(ξ)) / ε` on common paths.
    pub value: Estimate,
    /// Paired `adjoint formula - finite difference` on common paths.
    pub gap: Estimate,
    /// `sqrt(se_adjoint² + se_fd²)`.
    pub combined_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionalReport {
    /// `E Σ_k Σ_i (f(w_k) p_k + h₁(w_k)) Δζ_k h`, `w_k` the pre-jump state.
    pub adjoint_formula: Estimate,
    pub finite_differences: Vec<FiniteDifference>,
}

pub const DEFAULT_EPS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Adjoint directional derivative of the performance functional against
/// common-random-number finite differences.
///
/// `p.at(k)` must be the adjoint value paired with the increment `Δζ_k`; for
/// the exact dual adjoint this is its transported path.
pub fn directional_derivative_j(
    spec: &ProblemSpec,
    xi: &SingularControl,
    zeta: &Perturbation,
    p: &FieldPath,
    n_paths: usize,
    seed: u64,
    eps: &[f64],
) -> Result<DirectionalReport> {
    zeta.check_admissible(xi)?;
    let (g, n) = (spec.grid, spec.time.n_steps);
    if p.len() < n || *p.grid() != g {
        return Err(Error::ShapeMismatch("adjoint path does not match the problem grids".into()));
    }
    let bumped: Vec<SingularControl> = eps.iter().map(|e| xi.perturbed(zeta, *e)).collect::<Result<_>>()?;
    let rows: Vec<(f64, Vec<f64>)> = par_map_paths(n_paths, seed, |s, _| {
        let noise = NoisePath::generate(s, n, spec.time.dt());
        let mut formula = 0.0;
        simulate_events(spec, xi, &noise, |e| {
            if let Event::Jump(k, u) = e {
                let (pk, dz) = (p.at(k), zeta.step(k));
                formula += g.h
                    * g.interior()
                        .filter(|&i| dz[i - 1] != 0.0)
                        .map(|i| (spec.gain(u[i]).0 * pk[i] + spec.singular_reward(i, u[i]).0) * dz[i - 1])
                        .sum::<f64>();
            }
        })?;
        let base = path_value(spec, xi, &noise)?;
        let fds = bumped
            .iter()
            .zip(eps)
            .map(|(c, e)| Ok((path_value(spec, c, &noise)? - base) / e))
            .collect::<Result<_>>()?;
        Ok((formula, fds))
    })?;
    let formula: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let adjoint_formula = Estimate::from_samples(&formula);
    let finite_differences = eps
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let fd: Vec<f64> = rows.iter().map(|r| r.1[j]).collect();
            let value = Estimate::from_samples(&fd);
            FiniteDifference {
                eps: *e,
                value,
                gap: Estimate::paired(&formula, &fd),
                combined_stderr: (adjoint_formula.stderr.powi(2) + value.stderr.powi(2)).sqrt(),
            }
        })
        .collect();
    Ok(DirectionalReport { adjoint_formula, finite_differences })
}
