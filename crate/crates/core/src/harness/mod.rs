//! Configuration, run reports, persistence, verification suites and the
//! `smc` command line.

mod cli;
mod config;
mod persist;
mod report;
mod suites;

pub use cli::{cli_main, Cli, Command};
pub use config::{
    load_config, parse_config, Backend, BackwardConfig, CheckTolerances, ControlConfig, Format, GridConfig, McConfig, ModelConfig,
    OutputConfig, PolicyConfig, PriceConfig, ProblemConfig, RunConfig, TimeConfig, Validated, CONFIG_VERSION,
};
pub use persist::{format_float, path_csv, persist, Manifest, ManifestEntry};
pub use report::{config_hash, version_string, Bound, Check, Phase, RunReport, SeedRange};
pub use suites::{benchmark_direction, run_suite, NamedPaths, Suite};
