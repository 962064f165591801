use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::Validated;
use super::report::{Bound, Check, RunReport, SeedRange};
use crate::backward::{psor_oracle, skorokhod_residual, solve_projected, solve_reflected_with, BackwardSpec, Obstacle};
use crate::control::{
    assemble_adjoint_with, compare_controls, directional_derivative_j, extract_policy, stress_family, AdjointOptions, DEFAULT_EPS,
};
use crate::error::Result;
use crate::forward::{
    derivative_process, simulate_ensemble, simulate_path, FieldPath, ModelParams, NoisePath, Perturbation, ProblemSpec,
    SingularControl, TimeGrid, TimeScheme,
};
use crate::spatial::{
    apply_a, apply_a_star, build_grid, check_garding, inner_product, norm, space_mean_dual_weight, BoundaryKind, Field, Grid,
    OperatorSpec, SpaceMean,
};

/// Named verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Operators,
    Forward,
    Backward,
    Rate,
    Derivative,
    Directional,
    Policy,
    Positivity,
    Garding,
    All,
}

impl Suite {
    pub const EACH: [Suite; 9] = [
        Suite::Operators,
        Suite::Forward,
        Suite::Backward,
        Suite::Rate,
        Suite::Derivative,
        Suite::Directional,
        Suite::Policy,
        Suite::Positivity,
        Suite::Garding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Operators => "operators",
            Suite::Forward => "forward",
            Suite::Backward => "backward",
            Suite::Rate => "rate",
            Suite::Derivative => "derivative",
            Suite::Directional => "directional",
            Suite::Policy => "policy",
            Suite::Positivity => "positivity",
            Suite::Garding => "garding",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`; expected one of operators, forward, backward, rate, derivative, directional, policy, positivity, garding, all"))
    }
}

pub type NamedPaths = Vec<(String, FieldPath)>;

/// Runs `suite`, appending checks and values to `report`.
pub fn run_suite(suite: Suite, v: &Validated, report: &mut RunReport) -> Result<NamedPaths> {
    let mut paths = Vec::new();
    let list: Vec<Suite> = if suite == Suite::All { Suite::EACH.to_vec() } else { vec![suite] };
    for s in list {
        let out = report.timed(s.name(), |r| match s {
            Suite::Operators => operators(v, r),
            Suite::Forward => forward(v, r),
            Suite::Backward => backward(v, r),
            Suite::Rate => rate(v, r, &v.config.backward.levels),
            Suite::Derivative => derivative(v, r),
            Suite::Directional => directional(v, r),
            Suite::Policy => policy(v, r),
            Suite::Positivity => positivity(v, r),
            Suite::Garding => garding(v, r),
            Suite::All => unreachable!(),
        })?;
        paths.extend(out);
    }
    Ok(paths)
}

/// Either white noise or a random constant plus low sine modes (where
/// averaging is closest to the identity).
fn random_field(rng: &mut ChaCha8Rng, grid: Grid) -> Field {
    let mut values: Vec<f64> = if rng.random_bool(0.5) {
        (0..grid.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect()
    } else {
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        grid.node_positions()
            .iter()
            .map(|x| {
                let s = PI * (x - grid.x_min) / grid.length();
                c[0] + c[1] * s.sin() + c[2] * (2.0 * s).sin() + c[3] * (3.0 * s).sin()
            })
            .collect()
    };
    values[0] = 0.0;
    values[grid.n_cells + 1] = 0.0;
    Field { grid, values, boundary: BoundaryKind::DirichletZero }
}

/// Contraction of the space mean, its adjoint identity, the discrete Green
/// identity and the closed-form dual weight.
fn operators(v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let t = &v.config.tolerances;
    let theta = v.problem.op.theta;
    let (x0, x1) = (v.problem.grid.x_min, v.problem.grid.x_max);
    let mut rng = ChaCha8Rng::seed_from_u64(v.config.mc.seed.unwrap_or(0));
    let (mut contraction, mut mean_dual, mut green, mut weight) = (f64::NEG_INFINITY, 0.0_f64, 0.0_f64, 0.0_f64);
    for n in [50, 100, 200] {
        let g = build_grid(x0, x1, n)?;
        let mean = SpaceMean::new(&g, theta)?;
        let op = OperatorSpec::constant(&g, v.problem.op.second_order[0], v.problem.op.first_order[0], theta);
        for _ in 0..1000 {
            let phi = random_field(&mut rng, g);
            let gphi = Field { values: mean.apply(&phi.values), ..phi.clone() };
            contraction = contraction.max((norm(&gphi) - norm(&phi)) / (g.h * norm(&phi)));
        }
        for _ in 0..100 {
            let (phi, psi) = (random_field(&mut rng, g), random_field(&mut rng, g));
            let gphi = Field { values: mean.apply(&phi.values), ..phi.clone() };
            let gpsi = Field { values: mean.apply_adjoint(&psi.values), ..psi.clone() };
            // relative to the Cauchy–Schwarz scale, which cancellation cannot shrink
            let (a, b) = (inner_product(&gphi, &psi)?, inner_product(&phi, &gpsi)?);
            mean_dual = mean_dual.max((a - b).abs() / (norm(&gphi) * norm(&psi)));
            let aphi = apply_a(&phi, &op);
            let (a, b) = (inner_product(&aphi, &psi)?, inner_product(&phi, &apply_a_star(&psi, &op))?);
            green = green.max((a - b).abs() / (norm(&aphi) * norm(&psi)));
        }
        let w = space_mean_dual_weight(&g, theta)?;
        for i in 0..g.n_nodes() {
            let x = g.x(i);
            let overlap = ((x + theta).min(x1) - (x - theta).max(x0)).max(0.0);
            weight = weight.max((w.values[i] - overlap / (2.0 * theta)).abs());
        }
    }
    r.checks.push(Check::new("contraction_excess_over_h", contraction, Bound::AtMost(t.contraction_factor)));
    r.checks.push(Check::new("space_mean_adjoint_identity", mean_dual, Bound::AtMost(t.duality)));
    r.checks.push(Check::new("green_identity", green, Bound::AtMost(t.duality)));
    r.checks.push(Check::new("dual_weight_closed_form", weight, Bound::AtMost(t.dual_weight)));
    Ok(Vec::new())
}

fn sine(g: Grid) -> Field {
    Field::from_fn(g, BoundaryKind::DirichletZero, |x| (PI * x).sin())
}

fn heat_error(values: &[f64], g: Grid, horizon: f64) -> f64 {
    let decay = (-PI * PI * horizon / 2.0).exp();
    g.interior().map(|i| (values[i] - decay * (PI * g.x(i)).sin()).abs()).fold(0.0, f64::max)
}

const HEAT_T: f64 = 0.1;

fn heat_forward(n: usize, steps: usize) -> Result<f64> {
    let g = build_grid(0.0, 1.0, n)?;
    let mut s = ProblemSpec::harvesting(g, TimeGrid { horizon: HEAT_T, n_steps: steps }, ModelParams { alpha: 0.0, beta: 0.0, lambda0: 1.0 }, 0.1);
    s.initial = sine(g);
    s.scheme = TimeScheme::CrankNicolson;
    let path = simulate_path(&s, &SingularControl::zero(steps, n), &NoisePath::zero(steps, s.time.dt()))?;
    Ok(heat_error(&path.last().values, g, HEAT_T))
}

fn heat_backward(n: usize, steps: usize) -> Result<f64> {
    let g = build_grid(0.0, 1.0, n)?;
    let mut s = BackwardSpec::new(OperatorSpec::constant(&g, 0.5, 0.0, 0.1), sine(g), TimeGrid { horizon: HEAT_T, n_steps: steps });
    s.scheme = TimeScheme::CrankNicolson;
    let sol = solve_projected(&s)?;
    Ok(heat_error(sol.y.at(0), g, HEAT_T))
}

fn refinement_checks(r: &mut RunReport, name: &str, coarse: f64, fine: f64, tol: f64, ratio: f64) {
    r.checks.push(Check::new(format!("{name}_heat_error"), coarse, Bound::AtMost(tol)));
    r.checks.push(Check::new(format!("{name}_refinement_ratio"), coarse / fine, Bound::AtLeast(ratio)));
}

/// Noise-free heat kernel at N = 200 / 4000 steps and one refinement.
fn forward(v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let t = &v.config.tolerances;
    let (coarse, fine) = (heat_forward(200, 4000)?, heat_forward(401, 8000)?);
    refinement_checks(r, "forward", coarse, fine, t.analytic, t.refinement_ratio);
    Ok(Vec::new())
}

/// Unreflected backward heat kernel, PSOR agreement and Skorokhod
/// complementarity on the configured active-obstacle benchmark.
fn backward(v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let t = &v.config.tolerances;
    let b = &v.config.backward;
    let (coarse, fine) = (heat_backward(200, 4000)?, heat_backward(401, 8000)?);
    refinement_checks(r, "backward", coarse, fine, t.analytic, t.refinement_ratio);

    let small = b.build(b.grid.n_cells.min(50), b.n_steps.min(200))?;
    let reflected = solve_reflected_with(&small, &b.levels, b.extrapolation)?;
    let oracle = psor_oracle(&small)?;
    r.checks.push(Check::new("psor_max_difference", reflected.y.max_abs_diff(&oracle), Bound::AtMost(t.psor)));

    let full = solve_reflected_with(&v.backward, &b.levels, b.extrapolation)?;
    r.checks.push(Check::new("skorokhod_relative", full.diagnostics.skorokhod_relative, Bound::AtMost(t.skorokhod)));
    r.value("backward_diagnostics", &full.diagnostics);
    let mut inactive = v.backward.clone();
    inactive.obstacle = Obstacle::Static { values: vec![-1.0; inactive.grid.n_nodes()] };
    let calm = solve_reflected_with(&inactive, &b.levels, b.extrapolation)?;
    let residual = skorokhod_residual(&calm.contact, &inactive.obstacle, &calm.eta).abs();
    r.checks.push(Check::new("skorokhod_inactive", residual, Bound::AtMost(0.0)));
    Ok(vec![("reflected_y".into(), full.y), ("reflected_eta".into(), full.eta)])
}

/// Log-log slope of the penalty energy.
pub fn rate(v: &Validated, r: &mut RunReport, levels: &[u64]) -> Result<NamedPaths> {
    let t = &v.config.tolerances;
    let rep = crate::backward::penalization_rate(&v.backward, levels)?;
    r.checks.push(Check::new("penalization_slope", rep.loglog_slope, Bound::Within(t.slope_min, t.slope_max)));
    let pairwise: Vec<f64> = rep
        .levels
        .windows(2)
        .zip(rep.energies.windows(2))
        .map(|(n, e)| (e[1] / e[0]).ln() / (n[1] as f64 / n[0] as f64).ln())
        .collect();
    let constant = rep.levels.iter().zip(&rep.energies).map(|(n, e)| (*n as f64).powi(2) * e).fold(0.0, f64::max);
    r.value("rate", &rep);
    r.value("rate_pairwise_slopes", &pairwise);
    r.value("rate_constant_max_n2_e", constant);
    Ok(Vec::new())
}

/// Control and direction shared by the gradient checks: a constant harvest
/// rate and a sign-alternating perturbation that keeps the control admissible.
pub fn benchmark_direction(spec: &ProblemSpec) -> Result<(SingularControl, Perturbation)> {
    let (n, cells) = (spec.time.n_steps, spec.grid.n_cells);
    let xi = SingularControl::constant_rate(n, cells, 0.3, spec.time.dt())?;
    let zeta = Perturbation::new((0..n).map(|k| (0..cells).map(|j| if (k + j) % 3 == 0 { 0.01 } else { -0.002 }).collect()).collect())?;
    Ok((xi, zeta))
}

/// First-order agreement of the derivative process with finite differences.
fn derivative(v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let t = &v.config.tolerances;
    let spec = &v.problem;
    let seed = v.config.seed()?;
    let (xi, zeta) = benchmark_direction(spec)?;
    let noise = NoisePath::generate(seed, spec.time.n_steps, spec.time.dt());
    let base = simulate_path(spec, &xi, &noise)?;
    let z = derivative_process(spec, &xi, &zeta, &noise)?;
    let err = |eps: f64| -> Result<f64> {
        let bumped = simulate_path(spec, &xi.perturbed(&zeta, eps)?, &noise)?;
        let mut e = 0.0_f64;
        for k in 0..base.len() {
            for i in spec.grid.interior() {
                e = e.max(((bumped.at(k)[i] - base.at(k)[i]) / eps - z.at(k)[i]).abs());
            }
        }
        Ok(e)
    };
    let (e2, e3) = (err(1e-2)?, err(1e-3)?);
    r.seeds.insert("derivative".into(), SeedRange { root: seed, n_paths: 1 });
    r.value("derivative_errors", [e2, e3]);
    r.checks.push(Check::new("derivative_error_ratio", e2 / e3, Bound::Within(t.derivative_ratio_min, t.derivative_ratio_max)));
    Ok(vec![("derivative_process".into(), z)])
}

/// Adjoint directional derivative against common-random-number differences.
fn directional(v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let t = &v.config.tolerances;
    let spec = &v.problem;
    let (seed, n_paths) = (v.config.seed()?, v.config.mc.n_paths);
    let (xi, zeta) = benchmark_direction(spec)?;
    let p = assemble_adjoint_with(spec, &xi, AdjointOptions::exact())?.solve()?.transported;
    let rep = directional_derivative_j(spec, &xi, &zeta, &p, n_paths, seed, &DEFAULT_EPS)?;
    let finest = rep.finite_differences.last().expect("at least one step size");
    r.seeds.insert("directional".into(), SeedRange { root: seed, n_paths });
    r.checks.push(
        Check::new("directional_gap_in_std_errors", finest.gap.estimate.abs() / finest.combined_stderr, Bound::AtMost(t.std_errors))
            .with_note(format!("eps = {}", finest.eps)),
    );
    r.value("directional", &rep);
    Ok(vec![("adjoint_transported".into(), p)])
}

/// Threshold policy: maximum-principle residuals and the stress comparison.
fn policy(v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let t = &v.config.tolerances;
    let spec = &v.problem;
    let (seed, n_paths) = (v.config.seed()?, v.config.mc.n_paths);
    let pol = extract_policy(spec, &v.policy_options())?;
    let rep = &pol.report;
    r.checks.push(Check::new("mp_slack", rep.slack_violation, Bound::AtMost(t.maximum_principle)));
    r.checks.push(Check::new("mp_complementarity", rep.complementarity_residual, Bound::AtMost(t.maximum_principle)));
    r.checks.push(Check::new("mp_variational_inequality", rep.vi_residual, Bound::AtMost(t.maximum_principle)));
    r.value("policy_report", rep);
    r.value("policy_degenerate", pol.degenerate);
    let family = stress_family(spec, &pol.xi_hat)?;
    let cmp = compare_controls(spec, &pol.xi_hat, &family, n_paths, seed)?;
    r.seeds.insert("policy".into(), SeedRange { root: seed, n_paths });
    r.value("policy_j", cmp.candidate);
    for row in &cmp.rows {
        let slack = row.advantage.estimate + t.std_errors * row.advantage.stderr;
        r.checks.push(Check::new(format!("policy_beats_{}", row.name), slack, Bound::AtLeast(0.0)).with_note(format!(
            "J = {:.6} vs {:.6}, paired advantage {:.3e} ± {:.1e}",
            cmp.candidate.estimate, row.value.estimate, row.advantage.estimate, row.advantage.stderr
        )));
    }
    Ok(vec![("policy_adjoint".into(), pol.reflected.y), ("policy_mean_state".into(), pol.mean_state)])
}

/// Strict positivity under implicit stepping for the extracted policy and
/// the stress family.
fn positivity(v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let mut spec = v.problem.clone();
    spec.scheme = TimeScheme::Implicit;
    let (seed, n_paths) = (v.config.seed()?, v.config.mc.n_paths);
    let pol = extract_policy(&spec, &v.policy_options())?;
    let mut controls = vec![("policy".to_string(), pol.xi_hat.clone())];
    controls.extend(stress_family(&spec, &pol.xi_hat)?.into_iter().map(|c| (c.name, c.control)));
    r.seeds.insert("positivity".into(), SeedRange { root: seed, n_paths });
    for (name, ctl) in controls {
        let worst = ctl.increments().iter().flatten().fold(0.0_f64, |a, d| a.max(*d)) * spec.model.lambda0;
        let e = simulate_ensemble(&spec, &ctl, n_paths, seed)?;
        let m = e.min_site;
        r.checks.push(Check::new(format!("positivity_{name}"), m.value, Bound::Above(0.0)).with_note(format!(
            "max lambda0*dxi = {worst:.9}; min at seed {}, t = {}, x = {}",
            m.seed, m.t, m.x
        )));
    }
    Ok(Vec::new())
}

/// Coercivity constants of the benchmark operator; the zero operator must fail.
fn garding(v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let g = v.problem.grid;
    let rep = check_garding(&v.problem.op, &g);
    r.checks.push(Check::new("garding_alpha", rep.alpha, Bound::Above(0.0)).with_note(format!("lambda = {}", rep.lambda)));
    let zero = check_garding(&OperatorSpec::constant(&g, 0.0, 0.0, v.problem.op.theta), &g);
    r.checks.push(
        Check::new("garding_zero_operator_satisfied", if zero.satisfied { 1.0 } else { 0.0 }, Bound::AtMost(0.0))
            .with_note(format!("alpha = {}", zero.alpha)),
    );
    r.value("garding", rep);
    Ok(Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::RunConfig;

    fn run(s: Suite) -> RunReport {
        let v = RunConfig::default().validate().unwrap();
        let mut r = RunReport::new("verify", &v.config);
        run_suite(s, &v, &mut r).unwrap();
        r
    }

    #[test]
    fn names_round_trip() {
        for s in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn operators_and_garding_pass() {
        for s in [Suite::Operators, Suite::Garding] {
            let r = run(s);
            assert!(r.passed(), "{:?}", r.checks);
            assert_eq!(r.phases.len(), 1);
        }
    }

    #[test]
    fn derivative_suite_passes() {
        let r = run(Suite::Derivative);
        assert!(r.passed(), "{:?}", r.checks);
    }
}
