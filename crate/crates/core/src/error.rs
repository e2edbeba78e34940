//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A resource guard was hit (mesh level, matrix size, index set size).
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// An input value lies outside the admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally incompatible inputs (e.g. meshes that are not nested).
    #[error("structural error: {0}")]
    Structure(String),

    /// A matrix that must be (semi)definite is not.
    #[error("matrix is not positive semidefinite: {0}")]
    NotPsd(String),

    /// A low-rank factorization stopped at its rank cap before reaching the
    /// requested tolerance.
    #[error("factorization truncated at rank {rank}: relative trace {achieved:e} > tolerance {tolerance:e}")]
    FactorizationTruncated {
        rank: usize,
        achieved: f64,
        tolerance: f64,
    },

    /// An iterative solver did not converge.
    #[error("solver did not converge within {iterations} iterations: relative residual {residual:e} > {tolerance:e}")]
    Convergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    /// A quadrature rule came out empty or ill-formed.
    #[error("degenerate quadrature rule: {0}")]
    DegenerateRule(String),

    /// Failure of a sample solve inside a moment estimation, tagged with the
    /// quadrature node that triggered it.
    #[error("sample solve failed at quadrature node {node}: {source}")]
    SampleFailure {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
