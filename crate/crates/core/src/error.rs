use thiserror::Error;

/// Errors raised by the decomposition, kernel and sampling routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("character table invalid: {0}")]
    TableInvalid(String),

    #[error("kernel is not positive semidefinite: min eigenvalue {min_eigenvalue:e}, max eigenvalue {max_eigenvalue:e}")]
    NotPositiveSemidefinite {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("kernel is not symmetric: max asymmetry {0:e}")]
    NotSymmetric(f64),

    #[error("no group action is bound to the index space")]
    MissingAction,

    #[error("irrep {0} has complex character values; a real-valued character is required")]
    ComplexCharacter(String),

    #[error("kernel is not invariant under the action: max deviation {max_deviation:e} > tol {tol:e}")]
    NotInvariant { max_deviation: f64, tol: f64 },

    #[error("wrong group: {0}")]
    WrongGroup(String),

    #[error("argument outside admissible domain: {0}")]
    OutOfDomain(String),

    #[error("grid cannot resolve dual vector {index:?}: axis {axis} has {points} points")]
    Nyquist {
        index: Vec<i64>,
        axis: usize,
        points: usize,
    },

    #[error("lattice basis is singular")]
    SingularLattice,

    #[error("decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("sample too small: {found} < {required}")]
    SampleTooSmall { found: usize, required: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
