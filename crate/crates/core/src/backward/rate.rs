use rayon::prelude::*;
use serde::Serialize;

use super::solver::{check_levels, solve_penalized};
use super::spec::{BackwardSpec, Side};
use crate::error::{Error, Result};

const ENERGY_FLOOR: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub levels: Vec<u64>,
    /// `E_n = Σ_k dt·h·Σ_i ((Y^n - L)⁻)²` per level.
    pub energies: Vec<f64>,
    /// Least-squares slope of `log E_n` against `log n`.
    pub loglog_slope: f64,
    /// `E_{n_{j+1}} <= E_{n_j}` for every consecutive pair.
    pub monotone: bool,
}

/// Squared constraint violation of one penalized solve.
pub fn penalty_energy(spec: &BackwardSpec, n: u64) -> Result<f64> {
    let sol = solve_penalized(spec, n)?;
    let sign = if spec.side == Side::Lower { 1.0 } else { -1.0 };
    let (g, dt) = (spec.grid, spec.time.dt());
    let mut e = 0.0;
    for k in 0..sol.y.len() {
        if let Some(l) = spec.obstacle.at(k) {
            let y = sol.y.at(k);
            for i in g.interior() {
                e += dt * g.h * (sign * (l[i] - y[i])).max(0.0).powi(2);
            }
        }
    }
    Ok(e)
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn penalization_rate(spec: &BackwardSpec, levels: &[u64]) -> Result<RateReport> {
    check_levels(levels)?;
    if levels.len() < 4 || levels[levels.len() - 1] < 4 * levels[0] {
        return Err(Error::InvalidLevels(format!("need at least 4 levels spanning 2 octaves, got {levels:?}")));
    }
    let energies: Vec<f64> = levels.par_iter().map(|&n| penalty_energy(spec, n)).collect::<Result<_>>()?;
    if energies.iter().all(|e| *e < ENERGY_FLOOR) {
        return Err(Error::DegenerateFit);
    }
    let lx: Vec<f64> = levels.iter().map(|n| (*n as f64).ln()).collect();
    let ly: Vec<f64> = energies.iter().map(|e| e.max(ENERGY_FLOOR).ln()).collect();
    Ok(RateReport {
        loglog_slope: fit_slope(&lx, &ly),
        monotone: energies.windows(2).all(|w| w[1] <= w[0]),
        levels: levels.to_vec(),
        energies,
    })
}
