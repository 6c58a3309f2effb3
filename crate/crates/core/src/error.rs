use thiserror::Error;

/// Errors raised by the chain numerics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("dimension {dim} exceeds the configured cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("site sets are not disjoint")]
    NotDisjoint,

    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),

    #[error("basis dimension {dim} too small for beta={beta}: tail {tail:.3e}")]
    InsufficientDim { dim: usize, beta: f64, tail: f64 },

    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudgetExceeded(String),

    #[error("operator is not positive: {0}")]
    NotPositive(String),

    #[error("resolvent parameter lambda must be nonzero")]
    LambdaZero,

    #[error("Im z = {im} outside the strip [0, {beta}]")]
    OutOfStrip { im: f64, beta: f64 },

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
