use rayon::prelude::*;
use serde::Serialize;

use super::control::SingularControl;
use super::noise::NoisePath;
use super::path::FieldPath;
use super::problem::ProblemSpec;
use super::simulate::{check_shapes, simulate_visit, warn_cfl};
use crate::error::{Error, Result};

const CHUNK: usize = 64;

/// Where the smallest interior value over an ensemble was observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NegativeSite {
    pub seed: u64,
    pub t: f64,
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub mean: FieldPath,
    /// `(seed, u(T))` in seed order.
    pub terminals: Vec<(u64, Vec<f64>)>,
    /// Sample variance of `u(T)` per node (zero for a single path).
    pub terminal_variance: Vec<f64>,
    /// Whether every interior value of every path stayed strictly positive.
    pub positive: bool,
    /// Smallest interior value seen, with its location.
    pub min_site: NegativeSite,
}

/// Maps `f(seed, index)` over paths `seed, seed+1, …` in parallel; results
/// come back in seed order.
pub fn par_map_paths<T, F>(n_paths: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, usize) -> Result<T> + Sync,
{
    (0..n_paths).into_par_iter().map(|i| f(seed.wrapping_add(i as u64), i)).collect()
}

struct Partial {
    sum: Vec<Vec<f64>>,
    terminals: Vec<(u64, Vec<f64>)>,
    min_site: NegativeSite,
}

fn run_chunk(spec: &ProblemSpec, control: &SingularControl, seeds: std::ops::Range<u64>) -> Result<Partial> {
    let n_nodes = spec.grid.n_nodes();
    let mut sum = vec![vec![0.0; n_nodes]; spec.time.n_steps + 1];
    let mut terminals = Vec::with_capacity((seeds.end - seeds.start) as usize);
    let mut min_site = NegativeSite { seed: seeds.start, t: 0.0, x: 0.0, value: f64::INFINITY };
    for s in seeds {
        let noise = NoisePath::generate(s, spec.time.n_steps, spec.time.dt());
        let mut last = Vec::new();
        simulate_visit(spec, control, &noise, |k, u| {
            for (acc, v) in sum[k].iter_mut().zip(u) {
                *acc += v;
            }
            for i in spec.grid.interior() {
                if u[i] < min_site.value {
                    min_site = NegativeSite { seed: s, t: spec.time.t(k), x: spec.grid.x(i), value: u[i] };
                }
            }
            if k == spec.time.n_steps {
                last = u.to_vec();
            }
        })?;
        terminals.push((s, last));
    }
    Ok(Partial { sum, terminals, min_site })
}

/// Monte Carlo ensemble over seeds `seed, seed+1, …, seed+n_paths-1`.
///
/// Paths run in fixed-size chunks on the rayon pool and are merged in seed
/// order, so the result does not depend on the number of workers.
pub fn simulate_ensemble(spec: &ProblemSpec, control: &SingularControl, n_paths: usize, seed: u64) -> Result<EnsembleSummary> {
    if n_paths == 0 {
        return Err(Error::InvalidProblem("n_paths must be at least 1".into()));
    }
    spec.validate()?;
    check_shapes(spec, control, &NoisePath::zero(spec.time.n_steps, spec.time.dt()))?;
    warn_cfl(spec);
    let n_chunks = n_paths.div_ceil(CHUNK);
    let parts: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = seed.wrapping_add((c * CHUNK) as u64);
            let len = CHUNK.min(n_paths - c * CHUNK) as u64;
            run_chunk(spec, control, lo..lo + len)
        })
        .collect::<Result<_>>()?;

    let mut iter = parts.into_iter();
    let first = iter.next().expect("at least one chunk");
    let (mut sum, mut terminals, mut min_site) = (first.sum, first.terminals, first.min_site);
    for p in iter {
        for (row, prow) in sum.iter_mut().zip(&p.sum) {
            for (a, b) in row.iter_mut().zip(prow) {
                *a += b;
            }
        }
        terminals.extend(p.terminals);
        if p.min_site.value < min_site.value {
            min_site = p.min_site;
        }
    }

    let n = n_paths as f64;
    let fields = sum
        .into_iter()
        .map(|row| spec.field(row.into_iter().map(|v| v / n).collect()))
        .collect();
    let mean = FieldPath::new(spec.time.times(), fields);
    let mu = &mean.last().values;
    let terminal_variance = (0..spec.grid.n_nodes())
        .map(|i| {
            if n_paths < 2 {
                return 0.0;
            }
            terminals.iter().map(|(_, u)| (u[i] - mu[i]).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    Ok(EnsembleSummary { mean, terminals, terminal_variance, positive: min_site.value > 0.0, min_site })
}
