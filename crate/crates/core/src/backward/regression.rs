use rayon::prelude::*;

use super::solver::{BackwardStepper, Penalty};
use super::spec::{BackwardSpec, Side, StepOrder};
use crate::error::{Error, Result};
use crate::forward::{FieldPath, NoisePath};
use crate::linalg::cholesky_solve;
use crate::spatial::{BoundaryKind, Field, SpaceMean};

const RIDGE: f64 = 1e-8;
const BASIS: usize = 5;

/// Path averages of a regression-backend solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSolution {
    pub y_mean: FieldPath,
    pub z_mean: FieldPath,
    pub eta_mean: FieldPath,
    /// Per-path `Y(0)`.
    pub y0: Vec<Vec<f64>>,
    /// Path average of `Σ_k dt·h·Σ_i ((Y^n - L)⁻)²`.
    pub penalty_energy: f64,
}

fn basis(u: f64, m: f64) -> [f64; BASIS] {
    [1.0, u, u * u, u * u * u, m]
}

/// Least-squares fit of `target` on the basis at one node; returns the
/// fitted values per path.
fn project(rows: &[[f64; BASIS]], target: &[f64], step: usize, node: usize) -> Result<Vec<f64>> {
    let p = rows.len() as f64;
    let mut gram = vec![vec![0.0; BASIS]; BASIS];
    for r in rows {
        for a in 0..BASIS {
            for b in 0..BASIS {
                gram[a][b] += r[a] * r[b] / p;
            }
        }
    }
    for (a, row) in gram.iter_mut().enumerate() {
        row[a] += RIDGE;
    }
    let mut rhs = vec![0.0; BASIS];
    for (r, v) in rows.iter().zip(target) {
        for a in 0..BASIS {
            rhs[a] += r[a] * v / p;
        }
    }
    let c = cholesky_solve(&gram, &rhs).ok_or(Error::BasisDegenerate { step, node })?;
    Ok(rows.iter().map(|r| r.iter().zip(&c).map(|(x, y)| x * y).sum()).collect())
}

/// Least-squares Monte Carlo solve of the penalized equation at level `n`.
///
/// `states[p]` is the forward path used as regressor, `noises[p]` its
/// Brownian increments and `terminals[p]` the terminal value of path `p`.
/// Conditional expectations are projected on `{1, u, u², u³, ū}` at each
/// node; `Z_k = E[(Y_{k+1} - E_k Y_{k+1}) ΔB_k | F_k] / dt`.
pub fn solve_penalized_regression(
    spec: &BackwardSpec,
    states: &[FieldPath],
    noises: &[NoisePath],
    terminals: &[Vec<f64>],
    n: u64,
) -> Result<RegressionSolution> {
    if spec.side == Side::Upper {
        let neg: Vec<Vec<f64>> = terminals.iter().map(|t| t.iter().map(|v| -v).collect()).collect();
        let mut s = solve_penalized_regression(&spec.negated(), states, noises, &neg, n)?;
        for p in [&mut s.y_mean, &mut s.z_mean] {
            p.fields.iter_mut().for_each(|f| f.values.iter_mut().for_each(|v| *v = -*v));
        }
        s.y0.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = -*v));
        return Ok(s);
    }
    if n == 0 {
        return Err(Error::InvalidLevels("penalty level must be at least 1".into()));
    }
    if spec.order != StepOrder::Standard {
        return Err(Error::InvalidProblem("the regression backend supports the standard step order only".into()));
    }
    let stepper = BackwardStepper::new(spec)?;
    let (g, steps, dt) = (spec.grid, spec.time.n_steps, spec.time.dt());
    let paths = states.len();
    if paths == 0 || noises.len() != paths || terminals.len() != paths {
        return Err(Error::ShapeMismatch("states, noises and terminals must have one entry per path".into()));
    }
    if states.iter().any(|s| s.len() != steps + 1 || *s.grid() != g)
        || noises.iter().any(|z| z.increments.len() != steps)
        || terminals.iter().any(|t| t.len() != g.n_nodes())
    {
        return Err(Error::ShapeMismatch("regression sample does not match the backward grids".into()));
    }
    let mean = SpaceMean::new(&g, spec.op.theta)?;
    let nodes = g.n_nodes();
    let mut y: Vec<Vec<f64>> = terminals.to_vec();
    let mut sum_y = vec![vec![0.0; nodes]; steps + 1];
    let mut sum_z = vec![vec![0.0; nodes]; steps + 1];
    let mut sum_eta = vec![vec![0.0; nodes]; steps + 1];
    let mut deta_sum = vec![vec![0.0; nodes]; steps];
    let mut energy = 0.0;
    let accumulate = |acc: &mut Vec<f64>, rows: &[Vec<f64>]| {
        for r in rows {
            for (a, v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
    };
    accumulate(&mut sum_y[steps], &y);
    for k in (0..steps).rev() {
        let ubar: Vec<Vec<f64>> = states.par_iter().map(|s| mean.apply(s.at(k))).collect();
        let mut cond = vec![vec![0.0; nodes]; paths];
        let mut z = vec![vec![0.0; nodes]; paths];
        for i in g.interior() {
            let rows: Vec<[f64; BASIS]> = (0..paths).map(|p| basis(states[p].at(k)[i], ubar[p][i])).collect();
            let t1: Vec<f64> = y.iter().map(|r| r[i]).collect();
            let fitted = project(&rows, &t1, k, i)?;
            // centring on the fitted value removes the sample-mean noise of ΔB
            let t2: Vec<f64> = (0..paths).map(|p| (y[p][i] - fitted[p]) * noises[p].increments[k] / dt).collect();
            let zi = project(&rows, &t2, k, i)?;
            for p in 0..paths {
                cond[p][i] = fitted[p];
                z[p][i] = zi[p];
            }
        }
        for p in 0..paths {
            cond[p][0] = y[p][0];
            cond[p][nodes - 1] = y[p][nodes - 1];
        }
        let l = spec.obstacle.at(k).map(|l| &l[1..nodes - 1]);
        let solved: Vec<(Vec<f64>, Vec<f64>)> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let mut rhs = stepper.explicit_part(k, &cond[p], Some(&z[p]));
                stepper.couple(&mut rhs);
                let (yk, dk, _) = stepper
                    .solve_obstacle(&rhs, l, Penalty::Level(n as f64))
                    .map_err(|_| Error::NoConvergence { step: k, iters: super::solver::MAX_ITERS })?;
                Ok((stepper.nodal(yk), dk))
            })
            .collect::<Result<_>>()?;
        for (p, (yk, dk)) in solved.into_iter().enumerate() {
            if let Some(l) = spec.obstacle.at(k) {
                energy += g.interior().map(|i| dt * g.h * (l[i] - yk[i]).max(0.0).powi(2)).sum::<f64>();
            }
            for (j, d) in dk.iter().enumerate() {
                deta_sum[k][j + 1] += d;
            }
            y[p] = yk;
        }
        accumulate(&mut sum_y[k], &y);
        accumulate(&mut sum_z[k], &z);
    }
    for k in 0..steps {
        sum_eta[k + 1] = sum_eta[k].iter().zip(&deta_sum[k]).map(|(a, b)| a + b).collect();
    }
    let pf = paths as f64;
    let to_path = |rows: Vec<Vec<f64>>| {
        FieldPath::new(
            spec.time.times(),
            rows.into_iter()
                .map(|r| Field { grid: g, values: r.into_iter().map(|v| v / pf).collect(), boundary: BoundaryKind::DirichletData })
                .collect(),
        )
    };
    Ok(RegressionSolution {
        y_mean: to_path(sum_y),
        z_mean: to_path(sum_z),
        eta_mean: to_path(sum_eta),
        y0: y,
        penalty_energy: energy / pf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::{solve_penalized, Obstacle};
    use crate::forward::{simulate_path, ModelParams, ProblemSpec, SingularControl, TimeGrid, TimeScheme};
    use crate::spatial::{build_grid, OperatorSpec};

    fn sample(paths: usize, beta: f64) -> (ProblemSpec, Vec<FieldPath>, Vec<NoisePath>) {
        let g = build_grid(0.0, 1.0, 6).unwrap();
        let mut f = ProblemSpec::harvesting(g, TimeGrid { horizon: 0.5, n_steps: 10 }, ModelParams { alpha: 0.0, beta, lambda0: 1.0 }, 0.1);
        f.op = OperatorSpec::constant(&g, 0.0, 0.0, 0.1);
        f.scheme = TimeScheme::Implicit;
        let ctl = SingularControl::zero(10, 6);
        let noises: Vec<NoisePath> = (0..paths as u64).map(|s| NoisePath::generate(s, 10, 0.05)).collect();
        let states = noises.iter().map(|n| simulate_path(&f, &ctl, n).unwrap()).collect();
        (f, states, noises)
    }

    #[test]
    fn martingale_terminal_recovers_state_and_volatility() {
        let (f, states, noises) = sample(4000, 0.2);
        let terminals: Vec<Vec<f64>> = states.iter().map(|s| s.last().values.clone()).collect();
        let b = BackwardSpec::new(f.op.clone(), Field::zeros(f.grid), f.time);
        let sol = solve_penalized_regression(&b, &states, &noises, &terminals, 1).unwrap();
        // Y_k = u_k and Z_k = β u_k; at t = 0 both are deterministic
        for i in f.grid.interior() {
            assert!((sol.y_mean.at(0)[i] - 1.0).abs() < 1e-2);
            assert!((sol.z_mean.at(0)[i] - 0.2).abs() < 2e-2, "{}", sol.z_mean.at(0)[i]);
        }
    }

    #[test]
    fn deterministic_data_reproduce_deterministic_backend() {
        let (f, states, noises) = sample(50, 0.3);
        let g = f.grid;
        let phi = Field::from_fn(g, crate::spatial::BoundaryKind::DirichletZero, |x| (std::f64::consts::PI * x).sin());
        let l = g.node_positions().iter().map(|x| 0.9 * (std::f64::consts::PI * x).sin()).collect();
        let b = BackwardSpec::new(OperatorSpec::constant(&g, 0.5, 0.0, 0.1), phi.clone(), f.time)
            .with_obstacle(Obstacle::Static { values: l }, Side::Lower);
        let det = solve_penalized(&b, 32).unwrap();
        let terminals = vec![phi.values.clone(); 50];
        let reg = solve_penalized_regression(&b, &states, &noises, &terminals, 32).unwrap();
        assert!(reg.y_mean.max_abs_diff(&det.y) < 1e-6);
        assert!(reg.z_mean.fields.iter().all(|z| z.values.iter().all(|v| v.abs() < 1e-3)));
        assert!(reg.penalty_energy > 0.0);
    }

    #[test]
    fn shape_checks() {
        let (f, states, noises) = sample(3, 0.1);
        let b = BackwardSpec::new(f.op.clone(), Field::zeros(f.grid), f.time);
        assert!(solve_penalized_regression(&b, &states, &noises[..2], &vec![vec![0.0; 8]; 3], 1).is_err());
    }
}
