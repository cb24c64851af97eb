use super::matrix::Matrix;
use super::spectral::check_symmetric;
use crate::error::Result;

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// All eigenvalues of a symmetric matrix, largest first, via cyclic Jacobi
/// rotations.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-12 * max(1, ‖A‖_F)`. This path never calls into power iteration and
/// serves as its independent oracle.
pub fn jacobi_eigenvalues(sym: &Matrix) -> Result<Vec<f64>> {
    let mut a = check_symmetric(sym)?;
    let n = a.rows();
    let scale = a.frobenius_norm().max(1.0);

    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) < OFF_DIAGONAL_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Largest eigenvalue of a symmetric matrix (the `σ1(·)` of the TM analysis).
pub fn jacobi_top_eigenvalue(sym: &Matrix) -> Result<f64> {
    Ok(jacobi_eigenvalues(sym)?.first().copied().unwrap_or(0.0))
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Applies the rotation `JᵀAJ` that annihilates `a[p][q]`.
fn rotate(a: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = a.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[(k, p)] = new_kp;
        a[(p, k)] = new_kp;
        a[(k, q)] = new_kq;
        a[(q, k)] = new_kq;
    }
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
}
