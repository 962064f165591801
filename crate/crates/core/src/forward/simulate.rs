use super::control::SingularControl;
use super::noise::NoisePath;
use super::path::FieldPath;
use super::problem::{DriftMode, JumpTiming, NoiseMode, ProblemSpec};
use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::spatial::SpaceMean;

/// Precomputed operators for stepping one problem.
///
/// One step of the θ-scheme reads
/// `(I - θ dt A) u⁺ = u + (1-θ) dt A u + dt b(u, ū) + σ(u, ū) ΔB + f(u) Δξ`,
/// with boundary nodes pinned to the boundary data.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    spec: &'a ProblemSpec,
    mean: SpaceMean,
    a: Tridiagonal,
    system: Option<Tridiagonal>,
    theta: f64,
    dt: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let mean = SpaceMean::new(&spec.grid, spec.op.theta)?;
        let a = spec.op.interior_matrix(&spec.grid);
        let theta = spec.scheme.theta();
        let dt = spec.time.dt();
        let system = (theta > 0.0).then(|| {
            let mut m = Tridiagonal::zeros(a.len());
            for j in 0..a.len() {
                m.lower[j] = -theta * dt * a.lower[j];
                m.diag[j] = 1.0 - theta * dt * a.diag[j];
                m.upper[j] = -theta * dt * a.upper[j];
            }
            m
        });
        Ok(Self { spec, mean, a, system, theta, dt })
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn mean(&self) -> &SpaceMean {
        &self.mean
    }

    /// `(A v)` at interior node `i` using the full nodal vector.
    fn a_at(&self, v: &[f64], i: usize) -> f64 {
        let j = i - 1;
        self.a.lower[j] * v[i - 1] + self.a.diag[j] * v[i] + self.a.upper[j] * v[i + 1]
    }

    fn finish(&self, mut rhs: Vec<f64>, left: f64, right: f64) -> Vec<f64> {
        let n = rhs.len();
        let interior = match &self.system {
            Some(m) => {
                rhs[0] += self.theta * self.dt * self.a.lower[0] * left;
                rhs[n - 1] += self.theta * self.dt * self.a.upper[n - 1] * right;
                m.solve(&rhs)
            }
            None => rhs,
        };
        let mut out = Vec::with_capacity(n + 2);
        out.push(left);
        out.extend(interior);
        out.push(right);
        out
    }

    /// Right-hand side of the step applied to `w`, plus `f(w) Δξ` if given.
    fn rhs(&self, w: &[f64], db: f64, dxi: Option<&[f64]>) -> Vec<f64> {
        let spec = self.spec;
        let wbar = self.mean.apply(w);
        let m = spec.model;
        spec.grid
            .interior()
            .map(|i| {
                let drift_arg = match spec.drift_mode {
                    DriftMode::Mean => wbar[i],
                    DriftMode::Pointwise => w[i],
                };
                let noise_arg = match spec.noise_mode {
                    NoiseMode::Mean => wbar[i],
                    NoiseMode::Pointwise => w[i],
                };
                let jump = dxi.map_or(0.0, |d| spec.gain(w[i]).0 * d[i - 1]);
                w[i] + (1.0 - self.theta) * self.dt * self.a_at(w, i)
                    + self.dt * m.alpha * drift_arg
                    + m.beta * noise_arg * db
                    + jump
            })
            .collect()
    }

    fn continuous(&self, u: &[f64], db: f64) -> Vec<f64> {
        self.finish(self.rhs(u, db, None), self.spec.boundary.left, self.spec.boundary.right)
    }

    /// One step, returning the state the jump acts on and the next state.
    pub fn step_split(&self, u: &[f64], db: f64, dxi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let spec = self.spec;
        match spec.jump_timing {
            JumpTiming::StartOfStep => {
                let rhs = self.rhs(u, db, Some(dxi));
                (u.to_vec(), self.finish(rhs, spec.boundary.left, spec.boundary.right))
            }
            JumpTiming::EndOfStep => {
                let v = self.continuous(u, db);
                let mut next = v.clone();
                for i in spec.grid.interior() {
                    next[i] += spec.gain(v[i]).0 * dxi[i - 1];
                }
                (v, next)
            }
        }
    }

    /// Advances the state `u` (all nodes) by one step.
    pub fn step(&self, u: &[f64], db: f64, dxi: &[f64]) -> Vec<f64> {
        self.step_split(u, db, dxi).1
    }

    /// Linearized step for the derivative process `z` along `u` (both all
    /// nodes; `z` vanishes on the boundary).
    pub fn step_tangent(&self, u: &[f64], z: &[f64], db: f64, dxi: &[f64], dzeta: &[f64]) -> Vec<f64> {
        let spec = self.spec;
        match spec.jump_timing {
            JumpTiming::StartOfStep => {
                let mut rhs = self.rhs(z, db, None);
                for i in spec.grid.interior() {
                    let (f, df) = spec.gain(u[i]);
                    rhs[i - 1] += df * z[i] * dxi[i - 1] + f * dzeta[i - 1];
                }
                self.finish(rhs, 0.0, 0.0)
            }
            JumpTiming::EndOfStep => {
                let v = self.continuous(u, db);
                let mut zv = self.finish(self.rhs(z, db, None), 0.0, 0.0);
                for i in spec.grid.interior() {
                    let (f, df) = spec.gain(v[i]);
                    zv[i] += df * zv[i] * dxi[i - 1] + f * dzeta[i - 1];
                }
                zv
            }
        }
    }
}

/// What a path run reports, in order: `State(0)`, then for each step `k`
/// `Jump(k, w)` with the values the increment `Δξ_k` acts on, then
/// `State(k + 1)`.
#[derive(Debug, Clone, Copy)]
pub enum Event<'a> {
    State(usize, &'a [f64]),
    Jump(usize, &'a [f64]),
}

pub(crate) fn check_shapes(spec: &ProblemSpec, control: &SingularControl, noise: &NoisePath) -> Result<()> {
    if control.n_steps() != spec.time.n_steps || control.n_cells() != spec.grid.n_cells {
        return Err(Error::ShapeMismatch(format!(
            "control is {}x{}, problem needs {}x{}",
            control.n_steps(),
            control.n_cells(),
            spec.time.n_steps,
            spec.grid.n_cells
        )));
    }
    if noise.increments.len() != spec.time.n_steps {
        return Err(Error::ShapeMismatch("noise path length differs from n_steps".into()));
    }
    Ok(())
}

pub(crate) fn warn_cfl(spec: &ProblemSpec) {
    if !spec.cfl_ok() {
        log::warn!("explicit step violates the CFL guard: dt*max(a)/h^2 = {:.3} > 0.5", spec.cfl_number());
    }
}

/// Runs one path, reporting every state and jump site to `on`.
pub fn simulate_events(
    spec: &ProblemSpec,
    control: &SingularControl,
    noise: &NoisePath,
    mut on: impl FnMut(Event<'_>),
) -> Result<()> {
    let stepper = Stepper::new(spec)?;
    check_shapes(spec, control, noise)?;
    let mut u = spec.initial_values();
    on(Event::State(0, &u));
    for k in 0..spec.time.n_steps {
        let (pre, next) = stepper.step_split(&u, noise.increments[k], control.step(k));
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NanDetected { step: k + 1, seed: noise.seed });
        }
        on(Event::Jump(k, &pre));
        u = next;
        on(Event::State(k + 1, &u));
    }
    Ok(())
}

/// Runs one path, calling `visit(k, u_k)` for `k = 0..=n_steps`.
pub fn simulate_visit(
    spec: &ProblemSpec,
    control: &SingularControl,
    noise: &NoisePath,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    simulate_events(spec, control, noise, |e| {
        if let Event::State(k, u) = e {
            visit(k, u)
        }
    })
}

pub fn simulate_path(spec: &ProblemSpec, control: &SingularControl, noise: &NoisePath) -> Result<FieldPath> {
    warn_cfl(spec);
    let mut fields = Vec::with_capacity(spec.time.n_steps + 1);
    simulate_visit(spec, control, noise, |_, u| fields.push(spec.field(u.to_vec())))?;
    Ok(FieldPath::new(spec.time.times(), fields))
}

/// The values each increment `Δξ_k` acts on, at times `t_0..t_{N-1}`.
pub fn simulate_jump_sites(spec: &ProblemSpec, control: &SingularControl, noise: &NoisePath) -> Result<FieldPath> {
    let mut fields = Vec::with_capacity(spec.time.n_steps);
    simulate_events(spec, control, noise, |e| {
        if let Event::Jump(_, w) = e {
            fields.push(spec.field(w.to_vec()))
        }
    })?;
    let mut times = spec.time.times();
    times.pop();
    Ok(FieldPath::new(times, fields))
}
