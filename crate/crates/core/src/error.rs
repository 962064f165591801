use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid bounds: x_max ({x_max}) must exceed x_min ({x_min})")]
    InvalidBounds { x_min: f64, x_max: f64 },
    #[error("invalid size: need at least 2 interior nodes, got {0}")]
    InvalidSize(usize),
    #[error("invalid theta {0}: averaging radius must be positive")]
    InvalidTheta(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("non-finite value detected at step {step} (seed {seed:?})")]
    NanDetected { step: usize, seed: Option<u64> },
    #[error("perturbation is not admissible at step {step}, node {node}")]
    InadmissiblePerturbation { step: usize, node: usize },
    #[error("active-set iteration did not converge at step {step} after {iters} iterations")]
    NoConvergence { step: usize, iters: usize },
    #[error("regression normal system is singular at step {step}, node {node}")]
    BasisDegenerate { step: usize, node: usize },
    #[error("penalized solutions are not Cauchy: gaps {0:?}")]
    NonCauchy(Vec<f64>),
    #[error("degenerate fit: all penalty energies below floor")]
    DegenerateFit,
    #[error("invalid levels: {0}")]
    InvalidLevels(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config validation error at `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
