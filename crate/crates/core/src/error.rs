use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    /// Two candidate left eigenvalues are equally close to one right eigenvalue.
    #[error("ambiguous left/right pairing for eigenvalue {right}: candidates {first} and {second}")]
    Pairing {
        right: usize,
        first: usize,
        second: usize,
    },

    #[error("no solution: residual {residual:e} exceeds {allowed:e}")]
    NoSolution { residual: f64, allowed: f64 },

    /// `norms[k-1]` holds ‖N^k‖ for k = 1..=n.
    #[error("matrix is not at an exceptional point of order {order}: ‖N^k‖ = {norms:?}")]
    NotAnEp { order: usize, norms: Vec<f64> },

    #[error("Petermann factor diverges at the exceptional point (zero detuning)")]
    DivergesAtEp,

    #[error("mode tracking failed: {0}")]
    Tracking(String),

    #[error("no exceptional-point candidate among the eigenstates (threshold {tau})")]
    NoEpCandidate { tau: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Pairing { .. } => "pairing",
            Error::NoSolution { .. } => "no_solution",
            Error::NotAnEp { .. } => "not_an_ep",
            Error::DivergesAtEp => "diverges_at_ep",
            Error::Tracking(_) => "tracking",
            Error::NoEpCandidate { .. } => "no_ep_candidate",
            Error::Numerical(_) => "numerical",
            Error::Internal(_) => "internal",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
