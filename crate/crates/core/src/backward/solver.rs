use rayon::prelude::*;
use serde::Serialize;

use super::spec::{BackwardSpec, Side, StepOrder};
use crate::error::{Error, Result};
use crate::forward::FieldPath;
use crate::linalg::Tridiagonal;
use crate::spatial::{space_mean_dual_weight, Field, SpaceMean};

pub(crate) const MAX_ITERS: usize = 100;
pub(crate) const ITER_TOL: f64 = 1e-12;

/// Strength of the reflection in one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    /// Penalty drift `n (Y - L)⁻`.
    Level(f64),
    /// Exact projection (the `n → ∞` limit of each step).
    Exact,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub skorokhod_residual: f64,
    /// `|residual| / (max|Y| · ∫η(T))`, zero when `η ≡ 0`.
    pub skorokhod_relative: f64,
    /// Smallest side-signed gap `Y - L` on the contact values.
    pub min_gap: f64,
    /// Top level used; `None` for exact projection.
    pub penalization_level: Option<u64>,
    pub levels: Vec<u64>,
    /// `‖Y^{n_j}(0) - Y^{n_{j-1}}(0)‖_H` for consecutive levels.
    pub cauchy_gaps: Vec<f64>,
    /// Whether the returned `Y` is extrapolated from the top levels.
    pub extrapolated: bool,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution {
    pub y: FieldPath,
    pub z: FieldPath,
    /// Cumulative reflection `η(t_k) = Σ_{j<k} Δη_j`.
    pub eta: FieldPath,
    /// Values compared with the obstacle: `Y_k` in the standard order; in the
    /// dual orders `s + Δη + singular(s)` with `s` the transported value.
    pub contact: FieldPath,
    /// `Y_k` in the standard order. In the dual orders, the value paired with
    /// the singular increment of step `k`: `(I - θ dt B)⁻¹ Y_{k+1}` for
    /// [`StepOrder::Dual`], `Y_{k+1}` for [`StepOrder::DualSplit`]. Index `N`
    /// holds the terminal value.
    pub transported: FieldPath,
    pub diagnostics: Diagnostics,
}

/// Precomputed matrices for a backward solve.
pub(crate) struct BackwardStepper<'a> {
    spec: &'a BackwardSpec,
    b: Tridiagonal,
    system: Tridiagonal,
    mean: SpaceMean,
    weight: Vec<f64>,
    theta: f64,
    dt: f64,
}

impl<'a> BackwardStepper<'a> {
    pub(crate) fn new(spec: &'a BackwardSpec) -> Result<Self> {
        spec.validate()?;
        let a = spec.op.interior_matrix(&spec.grid);
        let b = if spec.adjoint { a.transpose() } else { a };
        let theta = spec.scheme.theta();
        let dt = spec.time.dt();
        let mut system = Tridiagonal::zeros(b.len());
        for j in 0..b.len() {
            system.lower[j] = -theta * dt * b.lower[j];
            system.diag[j] = 1.0 - theta * dt * b.diag[j];
            system.upper[j] = -theta * dt * b.upper[j];
        }
        Ok(Self {
            spec,
            mean: SpaceMean::new(&spec.grid, spec.op.theta)?,
            weight: space_mean_dual_weight(&spec.grid, spec.op.theta)?.values,
            b,
            system,
            theta,
            dt,
        })
    }

    fn b_at(&self, v: &[f64], i: usize) -> f64 {
        let j = i - 1;
        self.b.lower[j] * v[i - 1] + self.b.diag[j] * v[i] + self.b.upper[j] * v[i + 1]
    }

    /// `F(v)` at every node, with `Z = z`.
    pub(crate) fn driver(&self, v: &[f64], z: Option<&[f64]>) -> Vec<f64> {
        let d = &self.spec.driver;
        let vm = if d.y_mean != 0.0 { d.mean_form.apply(&self.mean, &self.weight, v) } else { vec![0.0; v.len()] };
        let mut out: Vec<f64> = (0..v.len()).map(|i| d.constant[i] + d.y * v[i] + d.y_mean * vm[i]).collect();
        if let Some(z) = z {
            let zm = if d.z_mean != 0.0 { d.mean_form.apply(&self.mean, &self.weight, z) } else { vec![0.0; z.len()] };
            for i in 0..out.len() {
                out[i] += d.z * z[i] + d.z_mean * zm[i];
            }
        }
        out
    }

    /// Explicit part `(I + (1-θ) dt B) v + dt F(v, z) + singular(v)` at interior nodes.
    pub(crate) fn explicit_part(&self, k: usize, v: &[f64], z: Option<&[f64]>) -> Vec<f64> {
        let f = self.driver(v, z);
        self.spec
            .grid
            .interior()
            .map(|i| {
                let mut r = v[i] + (1.0 - self.theta) * self.dt * self.b_at(v, i) + self.dt * f[i];
                if let Some(s) = &self.spec.singular {
                    r += s.value(k, i, v[i]);
                }
                r
            })
            .collect()
    }

    /// `(I + (1-θ) dt B) v + dt F(v)` at interior nodes.
    fn explicit_part_continuous(&self, v: &[f64]) -> Vec<f64> {
        let f = self.driver(v, None);
        self.spec.grid.interior().map(|i| v[i] + (1.0 - self.theta) * self.dt * self.b_at(v, i) + self.dt * f[i]).collect()
    }

    fn boundary(&self) -> (f64, f64) {
        let v = &self.spec.terminal.values;
        (v[0], v[v.len() - 1])
    }

    /// Adds the implicit boundary couplings to an interior right-hand side.
    pub(crate) fn couple(&self, rhs: &mut [f64]) {
        let (l, r) = self.boundary();
        let n = rhs.len();
        rhs[0] += self.theta * self.dt * self.b.lower[0] * l;
        rhs[n - 1] += self.theta * self.dt * self.b.upper[n - 1] * r;
    }

    pub(crate) fn nodal(&self, interior: Vec<f64>) -> Vec<f64> {
        let (l, r) = self.boundary();
        let mut out = Vec::with_capacity(interior.len() + 2);
        out.push(l);
        out.extend(interior);
        out.push(r);
        out
    }

    /// Solves `system·y - (reflection) = rhs` with `y >= l` (interior values).
    /// Returns `(y, Δη, iterations)`.
    pub(crate) fn solve_obstacle(&self, rhs: &[f64], l: Option<&[f64]>, penalty: Penalty) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        solve_obstacle(&self.system, rhs, l, penalty, self.dt)
    }

    /// One backward step from `y_next` (nodal) at step `k`; lower side.
    pub(crate) fn step(&self, k: usize, y_next: &[f64], penalty: Penalty) -> Result<StepOut> {
        let l = self.spec.obstacle.at(k).map(|l| &l[1..l.len() - 1]);
        match self.spec.order {
            StepOrder::Standard => {
                let mut rhs = self.explicit_part(k, y_next, None);
                self.couple(&mut rhs);
                let (y, deta, it) = self.solve_obstacle(&rhs, l, penalty)?;
                let y = self.nodal(y);
                Ok(StepOut { transported: y.clone(), contact: y.clone(), y, deta: pad(deta), iters: it })
            }
            StepOrder::Dual => {
                let mut rhs = y_next[1..y_next.len() - 1].to_vec();
                self.couple(&mut rhs);
                let s = self.nodal(self.system.solve(&rhs));
                let deta = self.reflect(&s, l, penalty);
                let contact = self.jump_site(k, &s, &deta);
                let mut y = self.explicit_part(k, &s, None);
                for (j, v) in y.iter_mut().enumerate() {
                    *v += deta[j + 1];
                }
                Ok(StepOut { y: self.nodal(y), transported: s, contact, deta, iters: 0 })
            }
            StepOrder::DualSplit => {
                let deta = self.reflect(y_next, l, penalty);
                let contact = self.jump_site(k, y_next, &deta);
                let mut rhs = contact[1..contact.len() - 1].to_vec();
                self.couple(&mut rhs);
                let s = self.nodal(self.system.solve(&rhs));
                let y = self.explicit_part_continuous(&s);
                Ok(StepOut { y: self.nodal(y), transported: y_next.to_vec(), contact, deta, iters: 0 })
            }
        }
    }

    /// Pointwise reflection of `s` (nodal) up to the obstacle interior `l`.
    fn reflect(&self, s: &[f64], l: Option<&[f64]>, penalty: Penalty) -> Vec<f64> {
        let mut deta = vec![0.0; s.len()];
        if let Some(l) = l {
            for (j, lj) in l.iter().enumerate() {
                let si = s[j + 1];
                if si < *lj {
                    deta[j + 1] = match penalty {
                        Penalty::Exact => lj - si,
                        Penalty::Level(n) => self.dt * n * (lj - si) / (1.0 + self.dt * n),
                    };
                }
            }
        }
        deta
    }

    /// `s + Δη + singular(s)`: the value the singular increment acts on.
    fn jump_site(&self, k: usize, s: &[f64], deta: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = s.iter().zip(deta).map(|(a, b)| a + b).collect();
        if let Some(term) = &self.spec.singular {
            for i in self.spec.grid.interior() {
                out[i] += term.value(k, i, s[i]);
            }
        }
        out
    }
}

pub(crate) struct StepOut {
    pub y: Vec<f64>,
    pub transported: Vec<f64>,
    pub contact: Vec<f64>,
    pub deta: Vec<f64>,
    pub iters: usize,
}

fn pad(interior: Vec<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(interior.len() + 2);
    out.push(0.0);
    out.extend(interior);
    out.push(0.0);
    out
}

/// Semi-smooth active-set iteration for `M y - rhs = n (l - y)⁺` (penalty)
/// or `min(M y - rhs, y - l) = 0` (exact). `M` must be an M-matrix.
pub(crate) fn solve_obstacle(
    m: &Tridiagonal,
    rhs: &[f64],
    l: Option<&[f64]>,
    penalty: Penalty,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let mut y = m.solve(rhs);
    let n = y.len();
    let Some(l) = l else {
        return Ok((y, vec![0.0; n], 0));
    };
    let mut active: Vec<bool> = (0..n).map(|i| y[i] < l[i]).collect();
    let mut iters = 0;
    while active.iter().any(|a| *a) {
        iters += 1;
        if iters > MAX_ITERS {
            return Err(Error::NoConvergence { step: 0, iters: MAX_ITERS });
        }
        let mut mm = m.clone();
        let mut r = rhs.to_vec();
        for i in (0..n).filter(|&i| active[i]) {
            match penalty {
                Penalty::Level(p) => {
                    mm.diag[i] += dt * p;
                    r[i] += dt * p * l[i];
                }
                Penalty::Exact => {
                    mm.lower[i] = 0.0;
                    mm.upper[i] = 0.0;
                    mm.diag[i] = 1.0;
                    r[i] = l[i];
                }
            }
        }
        let y_new = mm.solve(&r);
        let change = y_new.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        y = y_new;
        let next: Vec<bool> = match penalty {
            Penalty::Level(_) => (0..n).map(|i| y[i] < l[i]).collect(),
            Penalty::Exact => {
                let my = m.mul_vec(&y);
                (0..n).map(|i| if active[i] { my[i] - rhs[i] > 0.0 } else { y[i] < l[i] }).collect()
            }
        };
        if next == active || change <= ITER_TOL {
            break;
        }
        active = next;
    }
    let deta = match penalty {
        Penalty::Level(p) => (0..n).map(|i| dt * p * (l[i] - y[i]).max(0.0)).collect(),
        Penalty::Exact => {
            let my = m.mul_vec(&y);
            (0..n).map(|i| if active[i] { (my[i] - rhs[i]).max(0.0) } else { 0.0 }).collect()
        }
    };
    Ok((y, deta, iters))
}

/// `Σ_k Σ_i (Y_k - L_k)·Δη_k·h` over interior nodes.
pub fn skorokhod_residual(y: &FieldPath, obstacle: &super::Obstacle, eta: &FieldPath) -> f64 {
    let Some(_) = obstacle.at(0) else { return 0.0 };
    let g = *y.grid();
    let mut total = 0.0;
    for k in 0..eta.len() - 1 {
        let l = obstacle.at(k).expect("obstacle present");
        for i in g.interior() {
            let d = eta.at(k + 1)[i] - eta.at(k)[i];
            if d != 0.0 {
                total += (y.at(k)[i] - l[i]) * d * g.h;
            }
        }
    }
    total
}

fn path(spec: &BackwardSpec, rows: Vec<Vec<f64>>) -> FieldPath {
    let fields = rows.into_iter().map(|v| Field { grid: spec.grid, values: v, boundary: crate::spatial::BoundaryKind::DirichletData }).collect();
    FieldPath::new(spec.time.times(), fields)
}

fn solve_lower(spec: &BackwardSpec, penalty: Penalty) -> Result<BackwardSolution> {
    let stepper = BackwardStepper::new(spec)?;
    let steps = spec.time.n_steps;
    let nodes = spec.grid.n_nodes();
    let mut y = vec![Vec::new(); steps + 1];
    let mut contact = vec![Vec::new(); steps + 1];
    let mut transported = vec![Vec::new(); steps + 1];
    let mut deta = vec![vec![0.0; nodes]; steps];
    y[steps] = spec.terminal.values.clone();
    contact[steps] = y[steps].clone();
    transported[steps] = y[steps].clone();
    let mut max_it = 0;
    for k in (0..steps).rev() {
        let out = stepper.step(k, &y[k + 1], penalty).map_err(|e| match e {
            Error::NoConvergence { iters, .. } => Error::NoConvergence { step: k, iters },
            e => e,
        })?;
        if out.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NanDetected { step: k, seed: None });
        }
        max_it = max_it.max(out.iters);
        y[k] = out.y;
        contact[k] = out.contact;
        transported[k] = out.transported;
        deta[k] = out.deta;
    }
    let mut eta = vec![vec![0.0; nodes]; steps + 1];
    for k in 0..steps {
        eta[k + 1] = eta[k].iter().zip(&deta[k]).map(|(a, b)| a + b).collect();
    }
    let sol = BackwardSolution {
        z: path(spec, vec![vec![0.0; nodes]; steps + 1]),
        y: path(spec, y),
        eta: path(spec, eta),
        contact: path(spec, contact),
        transported: path(spec, transported),
        diagnostics: Diagnostics {
            penalization_level: match penalty {
                Penalty::Level(n) => Some(n as u64),
                Penalty::Exact => None,
            },
            max_iterations: max_it,
            ..Default::default()
        },
    };
    Ok(with_diagnostics(spec, sol))
}

pub(crate) fn with_diagnostics(spec: &BackwardSpec, mut sol: BackwardSolution) -> BackwardSolution {
    let sign = if spec.side == Side::Lower { 1.0 } else { -1.0 };
    let d = &mut sol.diagnostics;
    d.skorokhod_residual = sign * skorokhod_residual(&sol.contact, &spec.obstacle, &sol.eta);
    let g = spec.grid;
    let y_max = sol.y.fields.iter().flat_map(|f| f.values.iter()).fold(0.0_f64, |a, v| a.max(v.abs()));
    let eta_int: f64 = g.interior().map(|i| sol.eta.last().values[i] * g.h).sum();
    d.skorokhod_relative = if eta_int > 0.0 && y_max > 0.0 { d.skorokhod_residual.abs() / (y_max * eta_int) } else { 0.0 };
    d.min_gap = match spec.obstacle.at(0) {
        None => f64::INFINITY,
        Some(_) => (0..sol.contact.len())
            .flat_map(|k| {
                let l = spec.obstacle.at(k).expect("obstacle present");
                let c = sol.contact.at(k);
                g.interior().map(move |i| sign * (c[i] - l[i])).collect::<Vec<_>>()
            })
            .fold(f64::INFINITY, f64::min),
    };
    sol
}

fn negate_path(p: &FieldPath) -> FieldPath {
    let mut p = p.clone();
    p.fields.iter_mut().for_each(|f| f.values.iter_mut().for_each(|v| *v = -*v));
    p
}

/// Upper-side problems are solved as the lower-side problem for `-Y`.
pub(crate) fn by_side(spec: &BackwardSpec, f: impl Fn(&BackwardSpec) -> Result<BackwardSolution>) -> Result<BackwardSolution> {
    match spec.side {
        Side::Lower => f(spec),
        Side::Upper => {
            let s = f(&spec.negated())?;
            Ok(BackwardSolution { y: negate_path(&s.y), z: negate_path(&s.z), contact: negate_path(&s.contact), transported: negate_path(&s.transported), ..s })
        }
    }
}

/// Penalized solve at level `n` (deterministic backend, `Z ≡ 0`).
pub fn solve_penalized(spec: &BackwardSpec, n: u64) -> Result<BackwardSolution> {
    if n == 0 {
        return Err(Error::InvalidLevels("penalty level must be at least 1".into()));
    }
    by_side(spec, |s| solve_lower(s, Penalty::Level(n as f64)))
}

/// Exact per-step projection onto the constraint set.
pub fn solve_projected(spec: &BackwardSpec) -> Result<BackwardSolution> {
    by_side(spec, |s| solve_lower(s, Penalty::Exact))
}

/// How the reflected limit is read off the penalized family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// Use the top level as is.
    None,
    /// Cancel the `1/n` term using the top two levels.
    Linear,
    /// Cancel the `1/n` and `1/n²` terms using the top three levels.
    #[default]
    Quadratic,
}

impl Extrapolation {
    fn points(self) -> usize {
        match self {
            Extrapolation::None => 1,
            Extrapolation::Linear => 2,
            Extrapolation::Quadratic => 3,
        }
    }
}

/// Weights of the interpolating polynomial in `1/n` evaluated at `1/n = 0`.
fn limit_weights(levels: &[u64]) -> Vec<f64> {
    let x: Vec<f64> = levels.iter().map(|n| 1.0 / *n as f64).collect();
    (0..x.len())
        .map(|j| (0..x.len()).filter(|&m| m != j).map(|m| x[m] / (x[m] - x[j])).product())
        .collect()
}

pub(crate) fn check_levels(levels: &[u64]) -> Result<()> {
    if levels.is_empty() || levels[0] == 0 || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidLevels(format!("levels must be positive and strictly increasing, got {levels:?}")));
    }
    Ok(())
}

fn combine(paths: &[&FieldPath], weights: &[f64]) -> FieldPath {
    let mut out = paths[0].clone();
    for (k, f) in out.fields.iter_mut().enumerate() {
        for (i, v) in f.values.iter_mut().enumerate() {
            *v = paths.iter().zip(weights).map(|(p, w)| w * p.at(k)[i]).sum();
        }
    }
    out
}

/// Penalized solves at every level (run concurrently), Cauchy gaps between
/// consecutive levels, and the reflected limit.
pub fn solve_reflected(spec: &BackwardSpec, levels: &[u64]) -> Result<BackwardSolution> {
    solve_reflected_with(spec, levels, Extrapolation::default())
}

pub fn solve_reflected_with(spec: &BackwardSpec, levels: &[u64], extrapolation: Extrapolation) -> Result<BackwardSolution> {
    check_levels(levels)?;
    spec.validate()?;
    let sols: Vec<BackwardSolution> = levels.par_iter().map(|&n| solve_penalized(spec, n)).collect::<Result<_>>()?;
    let g = spec.grid;
    let gaps: Vec<f64> = sols
        .windows(2)
        .map(|w| g.interior().map(|i| (w[1].y.at(0)[i] - w[0].y.at(0)[i]).powi(2) * g.h).sum::<f64>().sqrt())
        .collect();
    if gaps.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-9) + 1e-12) {
        return Err(Error::NonCauchy(gaps));
    }
    let max_it = sols.iter().map(|s| s.diagnostics.max_iterations).max().unwrap_or(0);
    let m = extrapolation.points().min(sols.len());
    let used = &sols[sols.len() - m..];
    let out = if m == 1 {
        used[0].clone()
    } else {
        let w = limit_weights(&levels[levels.len() - m..]);
        let pick = |f: fn(&BackwardSolution) -> &FieldPath| combine(&used.iter().map(f).collect::<Vec<_>>(), &w);
        BackwardSolution {
            y: pick(|s| &s.y),
            z: pick(|s| &s.z),
            eta: pick(|s| &s.eta),
            contact: pick(|s| &s.contact),
            transported: pick(|s| &s.transported),
            diagnostics: Diagnostics { extrapolated: true, ..used[m - 1].diagnostics.clone() },
        }
    };
    let mut out = with_diagnostics(spec, out);
    out.diagnostics.levels = levels.to_vec();
    out.diagnostics.cauchy_gaps = gaps;
    out.diagnostics.max_iterations = max_it;
    Ok(out)
}
