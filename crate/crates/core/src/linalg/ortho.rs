use super::matrix::{dot, norm2, Matrix};
use crate::rng::{gaussian_matrix, seeded};

/// Seeded random orthogonal `n x n` matrix.
///
/// Orthogonalizes a Gaussian matrix column by column with modified
/// Gram-Schmidt, run twice per column to keep `UᵀU = I` at roundoff level.
pub fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    random_orthonormal_columns(n, n, seed)
}

/// `rows x cols` matrix with orthonormal columns (`cols <= rows`).
///
/// # Panics
/// Panics if `cols > rows`.
pub fn random_orthonormal_columns(rows: usize, cols: usize, seed: u64) -> Matrix {
    assert!(
        cols <= rows,
        "cannot fit {cols} orthonormal columns in R^{rows}"
    );
    let mut rng = seeded(seed);
    let g = gaussian_matrix(rows, cols, &mut rng);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut v = g.column(j);
        for _pass in 0..2 {
            for q in &basis {
                let c = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let n = norm2(&v);
        // Gaussian columns are linearly independent with probability one.
        debug_assert!(n > 1e-8);
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    Matrix::from_columns(&basis)
}
