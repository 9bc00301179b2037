use thiserror::Error;

/// Errors raised by the simulation, estimation and reconstruction layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("truncation n_max = {0} is invalid (need n_max >= 1)")]
    InvalidTruncation(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("operator flagged unitary deviates from U^dag U = I by {0:e}")]
    NotUnitary(f64),

    #[error("operator flagged hermitian deviates from A = A^dag by {0:e}")]
    NotHermitian(f64),

    #[error("Fock index {index} outside truncation n_max = {n_max}")]
    FockIndexOutOfRange { index: usize, n_max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate post-selection: success probability {0:e}")]
    DegeneratePostselection(f64),

    #[error("no post-selected shots in {basis} basis ({shots} shots drawn)")]
    NoPostselectedShots { basis: &'static str, shots: u64 },

    #[error("gamma*tau must be positive, got {0}")]
    NonPositiveGammaTau(f64),

    #[error("|beta_{n}| = {value:e} is below the reconstruction guard 1e-3")]
    BetaTooSmall { n: usize, value: f64 },

    #[error("weak-value estimates must cover n = 0..={n_max} in order; got {found} entries")]
    IncompleteEstimates { n_max: usize, found: usize },

    #[error("weak values sum to zero; cannot apply the completeness rescaling")]
    ZeroWeakValueSum,

    #[error("reconstruction did not converge after {iterations} iterations (cost {cost:e})")]
    NotConverged { iterations: usize, cost: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
