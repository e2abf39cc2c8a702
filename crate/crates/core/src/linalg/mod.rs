//! Small dense linear algebra: generalized Householder factors and products,
//! 2-D rotations and reflections, Jacobi SVD and constructive factorizations.

mod eigen;
mod factorize;
mod householder;
mod matrix;
mod svd;

pub use eigen::{characteristic_polynomial, eigenvalues_small, gh_product_eigenvalues, polynomial_roots, EIGEN_MAX_DIM};
pub use factorize::{gh_factorize, orthogonal_to_reflections};
pub use householder::{
    reflection2, reflection2_vector, rotation2, rotation_as_householders, swap_householder, GhFactor, GhProduct,
};
pub use matrix::{dot, norm2, Matrix};
pub use svd::{spectral_norm, svd_small, Svd, SVD_MAX_DIM};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expected {expected} entries, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("matrix is {0}x{1}, expected square")]
    NotSquare(usize, usize),
    #[error("dimension {0} exceeds the small-matrix limit")]
    TooLarge(usize),
    #[error("Householder vector has norm {0}, expected 1")]
    NotUnit(f64),
    #[error("beta {0} outside [0, 2]")]
    BetaOutOfRange(f64),
    #[error("zero vector cannot define a Householder factor")]
    ZeroVector,
    #[error("swap indices must differ (got {0} twice)")]
    DegenerateSwap(usize),
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("matrix is not orthogonal")]
    NotOrthogonal,
    #[error("spectral norm {0} exceeds 1")]
    NormTooLarge(f64),
    #[error("non-finite entries")]
    NonFinite,
}
