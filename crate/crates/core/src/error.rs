use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid misaligned: {0}")]
    GridMisaligned(String),
    #[error("tube too wide: {0}")]
    TubeTooWide(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("mesh does not match domain: {0}")]
    MeshMismatch(String),
    #[error("no sampled ball meets the complement of the domain")]
    NoBoundaryBallFound,

    #[error("non-positive shear modulus: inf mu = {0}")]
    NonPositiveMu(f64),
    #[error("negative first Lame modulus: inf upsilon = {0}")]
    NegativeUpsilon(f64),
    #[error("field has {got} components, expected {expected}")]
    ComponentMismatch { expected: usize, got: usize },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("invalid preset parameters: {0}")]
    InvalidParameters(String),

    #[error("mesh has no interior nodes")]
    EmptyInterior,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("zero vector in Rayleigh quotient")]
    ZeroVector,

    #[error("factorization failed: {0}")]
    FactorizationFailed(String),
    #[error("no convergence after {iterations} restarts ({converged} of {wanted} pairs converged, worst residual {worst_residual:e})")]
    NoConvergence {
        iterations: usize,
        converged: usize,
        wanted: usize,
        worst_residual: f64,
    },
    #[error("problem too large for dense oracle: {0} unknowns")]
    TooLarge(usize),
    #[error("invalid eigenpair request: {0}")]
    InvalidRequest(String),

    #[error("meshes are not nested: {0}")]
    NotNested(String),
    #[error("ball contains no triangles")]
    EmptyBall,
    #[error("subset too small: |S| = {measure:e} < {required:e}")]
    BadSubset { measure: f64, required: f64 },
    #[error("degenerate basis")]
    DegenerateBasis,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least two positive points, got {0}")]
    InsufficientPoints(usize),
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),
    #[error("at epsilon = {epsilon}: {source}")]
    AtEpsilon {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
