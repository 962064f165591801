use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{par_map_paths, simulate_events, Event, NoisePath, ProblemSpec, SingularControl, Stepper};

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self { estimate: mean, stderr, n_paths: n }
    }

    /// Paired difference `a - b` of two sample vectors on common paths.
    pub fn paired(a: &[f64], b: &[f64]) -> Self {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self::from_samples(&d)
    }
}

/// Reward collected along one path: running reward, singular reward on
/// pre-jump values and terminal reward, each integrated with weight `h`.
pub fn path_value(spec: &ProblemSpec, xi: &SingularControl, noise: &NoisePath) -> Result<f64> {
    let stepper = Stepper::new(spec)?;
    let (g, dt, n) = (spec.grid, spec.time.dt(), spec.time.n_steps);
    let p = &spec.prices;
    let running = p.h0_state != 0.0 || p.h0_mean != 0.0;
    let mut total = 0.0;
    simulate_events(spec, xi, noise, |e| match e {
        Event::State(k, u) if k == n => {
            total += g.interior().map(|i| p.g0[i] * u[i]).sum::<f64>() * g.h;
        }
        Event::State(_, u) => {
            if running {
                let ubar = stepper.mean().apply(u);
                total += dt * g.h * g.interior().map(|i| p.h0_state * u[i] + p.h0_mean * ubar[i]).sum::<f64>();
            }
        }
        Event::Jump(k, w) => {
            let d = xi.step(k);
            total += g.h * g.interior().filter(|&i| d[i - 1] != 0.0).map(|i| spec.singular_reward(i, w[i]).0 * d[i - 1]).sum::<f64>();
        }
    })?;
    Ok(total)
}

/// Per-path rewards for seeds `seed, seed+1, …`.
pub fn performance_samples(spec: &ProblemSpec, xi: &SingularControl, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    if n_paths == 0 {
        return Err(Error::InvalidProblem("n_paths must be at least 1".into()));
    }
    par_map_paths(n_paths, seed, |s, _| path_value(spec, xi, &NoisePath::generate(s, spec.time.n_steps, spec.time.dt())))
}

/// Monte Carlo estimate of the performance functional.
pub fn performance_j(spec: &ProblemSpec, xi: &SingularControl, n_paths: usize, seed: u64) -> Result<Estimate> {
    Ok(Estimate::from_samples(&performance_samples(spec, xi, n_paths, seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ModelParams, TimeGrid, TimeScheme};
    use crate::spatial::{build_grid, BoundaryKind, Field, OperatorSpec};
    use std::f64::consts::PI;

    #[test]
    fn terminal_only_heat() {
        let g = build_grid(0.0, 1.0, 200).unwrap();
        let mut s = ProblemSpec::harvesting(g, TimeGrid { horizon: 0.1, n_steps: 400 }, ModelParams { alpha: 0.0, beta: 0.0, lambda0: 1.0 }, 0.1);
        s.initial = Field::from_fn(g, BoundaryKind::DirichletZero, |x| (PI * x).sin());
        s.scheme = TimeScheme::Implicit;
        let j = performance_j(&s, &SingularControl::zero(400, 200), 3, 1).unwrap();
        assert!((j.estimate - 2.0 / PI * (-PI * PI * 0.05).exp()).abs() <= 3e-3);
        assert!(j.stderr < 1e-15);
    }

    #[test]
    fn immediate_harvest_by_hand() {
        let g = build_grid(0.0, 1.0, 9).unwrap();
        let mut s = ProblemSpec::harvesting(g, TimeGrid { horizon: 1.0, n_steps: 4 }, ModelParams { alpha: 0.0, beta: 0.0, lambda0: 1.0 }, 0.1);
        s.op = OperatorSpec::constant(&g, 0.0, 0.0, 0.1);
        let mut inc = vec![vec![0.0; 9]; 4];
        inc[0] = vec![0.5; 9];
        let xi = SingularControl::from_increments(inc).unwrap();
        let j = performance_j(&s, &xi, 2, 5).unwrap();
        let measure = 9.0 * g.h;
        assert!((j.estimate - 1.0 * measure).abs() < 1e-14);
    }

    #[test]
    fn paired_difference_of_identical_samples() {
        let a = [1.0, 2.0, 4.0];
        let e = Estimate::paired(&a, &a);
        assert_eq!((e.estimate, e.stderr), (0.0, 0.0));
        let one = Estimate::from_samples(&[3.0]);
        assert_eq!((one.estimate, one.stderr, one.n_paths), (3.0, 0.0, 1));
    }
}
