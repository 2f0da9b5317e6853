use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("commutator defect {defect:e} exceeds tolerance {tol:e}")]
    CommutatorTooLarge { defect: f64, tol: f64 },

    #[error(
        "random linear combination failed to triangularize the tuple after {attempts} attempts"
    )]
    DegenerateCombination { attempts: usize },

    #[error("matrix is not unitary (residual {residual:e})")]
    NotUnitary { residual: f64 },

    #[error("matrix is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("invalid banner: {0}")]
    InvalidBanner(String),

    #[error("configuration has coincident points")]
    CoincidentPoints,

    #[error("closed-form equilibrium radius requires alpha = 2 (got {0})")]
    UnsupportedAlpha(f64),

    #[error("empty sample set")]
    EmptySamples,

    #[error("initial state has non-finite target density")]
    InitNotFinite,

    #[error("post-burn-in acceptance rate {rate:e} is below 1e-3")]
    ZeroAcceptance { rate: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("joint eigenvalues are not distinct")]
    DegenerateEigenvalues,

    #[error("data does not fit the requested kappa case: {0}")]
    WrongCase(String),

    #[error(
        "finite-difference Jacobian unstable under step halving (relative change {rel_change:e})"
    )]
    UnstableDerivative { rel_change: f64 },

    #[error("unsupported matrix size n = {0}")]
    UnsupportedSize(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
