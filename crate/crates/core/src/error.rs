use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty region")]
    EmptyRegion,
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("region diameter {diam} is not below 1; internal diameter undefined")]
    DiameterTooLarge { diam: f64 },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("newton did not converge for branch {branch:?} after {iterations} iterations (residual {residual:e})")]
    NewtonFailed { branch: Vec<i64>, iterations: usize, residual: f64 },
    #[error("branches {a} and {b} produced roots within tolerance (map not locally invertible at this resolution)")]
    DuplicateRoots { a: usize, b: usize },
    #[error("branch ambiguity at step {step}: two preimages within {gap:e} of each other")]
    BranchAmbiguity { step: usize, gap: f64 },
    #[error("contraction failure at step {step}: minimum norm {min_norm}")]
    ContractionFailure { step: usize, min_norm: f64 },
    #[error("not a pseudo-orbit: step {step} misses by {dist:e} > delta {delta:e}")]
    InvalidPseudoOrbit { step: usize, dist: f64, delta: f64 },
    #[error("orbit exits the admissible region at step {step}")]
    OrbitExit { step: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("construction refused: {0}")]
    Refused(String),
}

pub type Result<T> = std::result::Result<T, Error>;
