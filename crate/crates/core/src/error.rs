use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not unitary (max |K^H K - I| = {0:e})")]
    NotUnitary(f64),

    #[error("reversed time order: t1 = {t1} > t2 = {t2}")]
    ReversedTime { t1: usize, t2: usize },

    #[error("invalid setup: {0}")]
    InvalidSetup(String),

    /// The detector of the earlier setup is not the source of the later one.
    #[error("setups are not consecutive: {0}")]
    NonConsecutive(String),

    #[error("setups cannot be or-combined: {0}")]
    NotCombinable(String),

    #[error("cannot decompose setup: {0}")]
    Decompose(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("setup does not fit the kernel lattice: {0}")]
    LatticeMismatch(String),

    #[error("path enumeration needs {paths:e} paths (limit {limit:e})")]
    PathExplosion { paths: f64, limit: f64 },

    #[error("invalid evaluation strategy: {0}")]
    InvalidStrategy(String),

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("wave function is not normalized (|norm^2 - 1| = {0:e})")]
    NotNormalized(f64),

    #[error("state space of size {size:e} exceeds limit {limit:e}")]
    SizeGuard { size: f64, limit: f64 },

    #[error("invalid Born experiment: {0}")]
    InvalidExperiment(String),

    #[error("Gaussian limit is degenerate for p = {0}")]
    DegenerateProbability(f64),

    #[error("no sample points inside the evaluable domain: {0}")]
    OutOfDomain(String),

    #[error("operation is not associative (residual {0:e})")]
    NonAssociative(f64),

    #[error("partial derivative S_1 vanishes near ({u}, {v})")]
    VanishingPartial { u: f64, v: f64 },

    #[error("recovered regrade is not strictly monotone")]
    NonMonotone,

    #[error("invalid operation sampler: {0}")]
    InvalidSampler(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
