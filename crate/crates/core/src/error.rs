use thiserror::Error;

/// Errors raised by the core numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("design is rank deficient at lambda = 0; use a positive penalty or more samples")]
    RankDeficient,

    #[error("empirical covariate matrix D_n is singular at n = {n}; the sample is below the N1 threshold where D_n is invertible with high probability")]
    SingularDesign { n: usize },

    #[error("operator retains {available} eigenpairs but {required} are required; increase the grid size or the kernel truncation")]
    InsufficientRank { required: usize, available: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "packing construction exhausted {attempts} attempts with {found} of {required} vectors"
    )]
    PackingExhausted {
        attempts: usize,
        found: usize,
        required: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
