use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix is not positive definite (eigenvalues in [{min_eigenvalue:.3e}, {max_eigenvalue:.3e}])")]
    NotPositiveDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("Hermitian eigensolver did not converge")]
    ConvergenceFailure,

    #[error("spectral function undefined for eigenvalue {eigenvalue:.3e}")]
    DomainError { eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid metric parameters alpha={alpha}, beta={beta} for p={p} (need alpha > 0 and beta > -alpha/p)")]
    InvalidMetricParams { alpha: f64, beta: f64, p: usize },

    #[error("retraction left the positive definite cone")]
    LeftCone,

    #[error("insufficient samples: n={n} must exceed p={p}")]
    InsufficientSamples { n: usize, p: usize },

    #[error("iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("Fisher information matrix is numerically singular (condition estimate {condition:.3e})")]
    SingularFim { condition: f64 },

    #[error("Gram-Schmidt pivot {index} has norm below threshold")]
    NumericalRankLoss { index: usize },

    #[error("class {label} has no training matrices")]
    EmptyClass { label: usize },

    #[error("label {label} outside 1..={class_count}")]
    InvalidLabel { label: usize, class_count: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
