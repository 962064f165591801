use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use super::config::{parse_config, Backend, RunConfig, Validated};
use super::persist::persist;
use super::report::{Bound, Check, RunReport, SeedRange};
use super::suites::{rate, run_suite, NamedPaths, Suite};
use crate::backward::{solve_penalized_regression, solve_projected, solve_reflected_with, Obstacle, Side};
use crate::control::{assemble_adjoint_with, extract_policy, performance_j, AdjointOptions};
use crate::error::{Error, Result};
use crate::forward::{simulate_ensemble, simulate_path, FieldPath, NoisePath};

#[derive(Debug, Parser)]
#[command(name = "smc", version, about = "Singular control of space-mean stochastic reaction-diffusion equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed (overrides mc.seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides outputs.directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Penalty levels, comma separated (overrides policy.levels for `adjoint`
    /// and `policy`, backward.levels otherwise).
    #[arg(long, global = true, value_delimiter = ',')]
    pub levels: Option<Vec<u64>>,
    /// Verification suite (overrides suite).
    #[arg(long, global = true)]
    pub suite: Option<String>,
    /// Monte Carlo paths (overrides mc.n_paths).
    #[arg(long, global = true)]
    pub paths: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Forward ensemble under the configured control.
    Simulate,
    /// Reflected adjoint along the configured control.
    Adjoint,
    /// Threshold policy and its maximum-principle residuals.
    Policy,
    /// Penalization rate study on the backward benchmark.
    Rate,
    /// Derivative-process and directional-derivative consistency.
    Derivcheck,
    /// Runs a named verification suite.
    Verify { suite: Option<String> },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Adjoint => "adjoint",
            Command::Policy => "policy",
            Command::Rate => "rate",
            Command::Derivcheck => "derivcheck",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Ladder for the penalized adjoint when `policy.levels` is empty. The jump
/// sites see the penalty only through kappa*dt, so it runs well past the
/// benchmark ladder.
const ADJOINT_LEVELS: [u64; 9] = [64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384];

const EXIT_FAILED: i32 = 1;
const EXIT_CONFIG: i32 = 2;

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Parse(_) | Error::Validation { .. })
}

fn configure(cli: &Cli) -> Result<Validated> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.mc.seed = Some(s);
    }
    if let Some(n) = cli.paths {
        config.mc.n_paths = n;
    }
    if let Some(l) = &cli.levels {
        match cli.command {
            Command::Adjoint | Command::Policy => config.policy.levels = l.clone(),
            _ => config.backward.levels = l.clone(),
        }
    }
    if let Some(d) = &cli.out {
        config.outputs.directory = d.display().to_string();
    }
    let suite = match &cli.command {
        Command::Verify { suite: Some(s) } => Some(s.clone()),
        _ => cli.suite.clone(),
    };
    if suite.is_some() {
        config.suite = suite;
    }
    config.validate()
}

fn workers() -> std::result::Result<Option<usize>, String> {
    match std::env::var("SMC_WORKERS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("SMC_WORKERS must be a positive integer, got `{s}`")),
        },
    }
}

fn execute(command: &Command, v: &Validated, r: &mut RunReport) -> Result<NamedPaths> {
    let spec = &v.problem;
    match command {
        Command::Simulate => {
            let (seed, n_paths) = (v.config.seed()?, v.config.mc.n_paths);
            let ctl = r.timed("control", |_| v.control())?;
            let e = r.timed("ensemble", |_| simulate_ensemble(spec, &ctl, n_paths, seed))?;
            r.seeds.insert("simulate".into(), SeedRange { root: seed, n_paths });
            r.value("positive", e.positive);
            r.value("min_site", e.min_site);
            r.value("terminal_variance", &e.terminal_variance);
            let horizon = spec.time.horizon;
            let mut paths = vec![("mean".to_string(), e.mean)];
            paths.extend(e.terminals.into_iter().map(|(s, u)| (format!("terminal_seed_{s}"), FieldPath::new(vec![horizon], vec![spec.field(u)]))));
            Ok(paths)
        }
        Command::Adjoint => {
            let ctl = r.timed("control", |_| v.control())?;
            let backend = v.config.backward.backend;
            let options = match backend {
                Backend::Deterministic => AdjointOptions::exact(),
                Backend::Regression => AdjointOptions::default(),
            };
            let mut adj = assemble_adjoint_with(spec, &ctl, options)?.backward;
            let lambda0 = spec.model.lambda0;
            adj.obstacle = Obstacle::Static { values: spec.prices.h10.iter().map(|h| h / lambda0).collect() };
            adj.side = v.config.policy.convention.side();
            let levels = match v.config.policy.levels.as_slice() {
                [] => ADJOINT_LEVELS.to_vec(),
                l => l.to_vec(),
            };
            let levels = &levels;
            match backend {
                Backend::Deterministic => {
                    let sol = r.timed("solve", |_| solve_reflected_with(&adj, levels, v.config.backward.extrapolation))?;
                    r.checks.push(Check::new(
                        "skorokhod_relative",
                        sol.diagnostics.skorokhod_relative,
                        Bound::AtMost(v.config.tolerances.skorokhod),
                    ));
                    let exact = solve_projected(&adj)?;
                    r.value("distance_to_projection", sol.y.max_abs_diff(&exact.y));
                    r.value("diagnostics", &sol.diagnostics);
                    Ok(vec![("adjoint_y".into(), sol.y), ("adjoint_eta".into(), sol.eta)])
                }
                Backend::Regression => {
                    let (seed, n_paths) = (v.config.seed()?, v.config.mc.n_paths);
                    let (n, dt) = (spec.time.n_steps, spec.time.dt());
                    let noises: Vec<NoisePath> = (0..n_paths as u64).map(|j| NoisePath::generate(seed + j, n, dt)).collect();
                    let states = r.timed("forward", |_| noises.iter().map(|z| simulate_path(spec, &ctl, z)).collect::<Result<Vec<_>>>())?;
                    // The standard order needs Y(T) on the admissible side;
                    // an obstacle above g0 reflects immediately at T.
                    let sign = if adj.side == Side::Lower { 1.0 } else { -1.0 };
                    let bar = adj.obstacle.at(n).expect("static obstacle").to_vec();
                    let mut lifted = 0.0_f64;
                    for (y, l) in adj.terminal.values.iter_mut().zip(&bar).skip(1).take(spec.grid.n_cells) {
                        let gap = sign * (*y - l);
                        if gap < 0.0 {
                            lifted = lifted.max(-gap);
                            *y = *l;
                        }
                    }
                    if lifted > 0.0 {
                        let w = format!("terminal value reflected onto the obstacle at T (max lift {lifted:.3e})");
                        log::warn!("{w}");
                        r.warnings.push(w);
                    }
                    r.value("terminal_lift", lifted);
                    let terminals = vec![adj.terminal.values.clone(); n_paths];
                    let top = *levels.last().expect("validated levels are non-empty");
                    let sol = r.timed("solve", |_| solve_penalized_regression(&adj, &states, &noises, &terminals, top))?;
                    r.seeds.insert("adjoint".into(), SeedRange { root: seed, n_paths });
                    r.value("penalty_energy", sol.penalty_energy);
                    Ok(vec![("adjoint_y_mean".into(), sol.y_mean), ("adjoint_z_mean".into(), sol.z_mean), ("adjoint_eta_mean".into(), sol.eta_mean)])
                }
            }
        }
        Command::Policy => {
            let (seed, n_paths) = (v.config.seed()?, v.config.mc.n_paths);
            let pol = r.timed("extract", |_| extract_policy(spec, &v.policy_options()))?;
            let tol = v.config.tolerances.maximum_principle;
            let rep = &pol.report;
            for (name, value) in [
                ("mp_slack", rep.slack_violation),
                ("mp_complementarity", rep.complementarity_residual),
                ("mp_variational_inequality", rep.vi_residual),
            ] {
                r.checks.push(Check::new(name, value, Bound::AtMost(tol)));
            }
            r.value("policy_report", rep);
            r.value("policy_degenerate", pol.degenerate);
            let j = r.timed("performance", |_| performance_j(spec, &pol.xi_hat, n_paths, seed))?;
            r.seeds.insert("policy".into(), SeedRange { root: seed, n_paths });
            r.value("policy_j", j);
            let times = spec.time.times();
            let cumulative = pol.xi_hat.cumulative();
            let xi = FieldPath::new(
                times,
                cumulative
                    .into_iter()
                    .map(|row| {
                        let mut values = vec![0.0];
                        values.extend(row);
                        values.push(0.0);
                        spec.field(values)
                    })
                    .collect(),
            );
            Ok(vec![("policy_xi".into(), xi), ("policy_adjoint".into(), pol.reflected.y), ("policy_mean_state".into(), pol.mean_state)])
        }
        Command::Rate => {
            let levels = v.config.backward.levels.clone();
            r.timed("rate", |r| rate(v, r, &levels))
        }
        Command::Derivcheck => {
            let mut paths = run_suite(Suite::Derivative, v, r)?;
            paths.extend(run_suite(Suite::Directional, v, r)?);
            Ok(paths)
        }
        Command::Verify { .. } => {
            let suite: Suite = v.config.suite.as_deref().unwrap_or("all").parse().map_err(|m| Error::Validation { field: "suite".into(), message: m })?;
            run_suite(suite, v, r)
        }
    }
}

fn print_report(r: &RunReport) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    for c in &r.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let note = c.note.as_ref().map(|n| format!(" [{n}]")).unwrap_or_default();
        // a closed pipe is not an error worth failing the run for
        let _ = writeln!(out, "{status} {} = {:.6e} ({:?}){note}", c.name, c.value, c.bound);
    }
}

/// Entry point of the `smc` binary; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let threads = match workers() {
        Ok(t) => t,
        Err(m) => {
            eprintln!("error: {m}");
            return EXIT_CONFIG;
        }
    };
    let v = match configure(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    for w in &v.warnings {
        log::warn!("{w}");
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_FAILED;
        }
    };
    let mut report = RunReport::new(cli.command.name(), &v.config);
    report.warnings = v.warnings.clone();
    let paths = match pool.install(|| execute(&cli.command, &v, &mut report)) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return if is_config_error(&e) { EXIT_CONFIG } else { EXIT_FAILED };
        }
    };
    print_report(&report);
    let dir = PathBuf::from(&v.config.outputs.directory);
    match persist(&report, &paths, &dir, &v.config.outputs.formats) {
        Ok(m) => {
            use std::io::Write;
            let _ = writeln!(std::io::stdout(), "manifest: {}", m.display());
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILED;
        }
    }
    if report.passed() {
        0
    } else {
        EXIT_FAILED
    }
}
