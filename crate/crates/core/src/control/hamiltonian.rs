use serde::Serialize;

use crate::forward::{DriftMode, NoiseMode, ProblemSpec};

/// Hamiltonian split into the part multiplying `dt` (`h0`) and the part
/// multiplying `ξ(dt, x)` (`h1`), with the pieces each is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianEval {
    pub h0: f64,
    pub h1: f64,
    /// Running reward `h₀(t, x, u, ū)`.
    pub running: f64,
    /// Drift `b(t, x, u, ū)`.
    pub drift: f64,
    /// Volatility `σ(t, x, u, ū)`.
    pub volatility: f64,
    /// Control gain `f(t, x, u)`.
    pub gain: f64,
    /// Singular reward `h₁(t, x, u)`.
    pub price: f64,
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub u_bar: f64,
    pub p: f64,
    pub q: f64,
}

/// Evaluates the Hamiltonian at interior node `i`.
pub fn hamiltonian(spec: &ProblemSpec, i: usize, t: f64, u: f64, u_bar: f64, p: f64, q: f64) -> HamiltonianEval {
    let m = spec.model;
    let running = spec.prices.h0_state * u + spec.prices.h0_mean * u_bar;
    let drift = m.alpha
        * match spec.drift_mode {
            DriftMode::Mean => u_bar,
            DriftMode::Pointwise => u,
        };
    let volatility = m.beta
        * match spec.noise_mode {
            NoiseMode::Mean => u_bar,
            NoiseMode::Pointwise => u,
        };
    let (gain, _) = spec.gain(u);
    let (price, _) = spec.singular_reward(i, u);
    HamiltonianEval {
        h0: running + drift * p + volatility * q,
        h1: gain * p + price,
        running,
        drift,
        volatility,
        gain,
        price,
        t,
        x: spec.grid.x(i),
        u,
        u_bar,
        p,
        q,
    }
}
