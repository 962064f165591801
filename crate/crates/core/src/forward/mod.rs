//! Controlled forward state equation: problem description, singular
//! controls, Brownian increments, θ-scheme Euler–Maruyama stepping, Monte
//! Carlo ensembles and the pathwise derivative process.

mod control;
mod derivative;
mod ensemble;
mod noise;
mod path;
mod problem;
mod simulate;

pub use control::{Perturbation, SingularControl};
pub use derivative::derivative_process;
pub use ensemble::{par_map_paths, simulate_ensemble, EnsembleSummary, NegativeSite};
pub use noise::NoisePath;
pub use path::FieldPath;
pub use problem::{
    BoundaryData, DriftMode, GainMode, JumpTiming, ModelParams, NoiseMode, Prices, ProblemSpec, Profile, SingularPrice,
    TimeGrid, TimeScheme,
};
pub use simulate::{simulate_events, simulate_jump_sites, simulate_path, simulate_visit, Event, Stepper};
