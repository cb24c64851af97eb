//! Dense linear algebra: the matrix carrier, the power-iteration spectral
//! estimator, and a cyclic-Jacobi eigenvalue oracle used to check it.

mod jacobi;
mod matrix;
mod ortho;
mod spectral;

pub use jacobi::{jacobi_eigenvalues, jacobi_top_eigenvalue};
pub use matrix::{dot, norm2, Matrix};
pub use ortho::{random_orthogonal, random_orthonormal_columns};
pub use spectral::{
    normalize_columns_paired, power_iteration, power_iteration_trace, top_singular_pair,
    PowerIterationConfig, SingularTriple, SpectralEstimate, DEFAULT_COLUMN_EPS, SYMMETRY_TOLERANCE,
};
