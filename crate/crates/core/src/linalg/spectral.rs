use rand::Rng;

use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Absolute asymmetry allowed before power iteration, relative to
/// `max(1, max |entry|)`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Guard for zero-norm columns during feature-map normalization.
pub const DEFAULT_COLUMN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationConfig {
    /// Stop once `‖v_{i+1} − v_i‖₂` falls below this.
    pub res_stop: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerIterationConfig {
    fn default() -> Self {
        Self {
            res_stop: 1e-6,
            max_iters: 1000,
            seed: 0,
        }
    }
}

impl PowerIterationConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    /// Estimated dominant eigenvalue (`v_{i+1}ᵀ·TM·v_i` at termination).
    pub value: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// Final iterate, sign-normalized so its first nonzero entry is positive.
    pub vector: Vec<f64>,
}

/// Dominant singular triple `(σ1, u1, v1)` of a rectangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple {
    pub sigma1: f64,
    pub u1: Vec<f64>,
    pub v1: Vec<f64>,
}

impl SingularTriple {
    /// `u1 · v1ᵀ`, the gradient of `W ↦ σ1(W)` when `σ1` is simple.
    pub fn direction(&self) -> Matrix {
        Matrix::outer(&self.u1, &self.v1)
    }
}

pub(crate) fn check_symmetric(m: &Matrix) -> Result<Matrix> {
    let Some(asym) = m.max_asymmetry() else {
        return Err(Error::dim(
            "symmetric matrix",
            "square matrix",
            format!("{}x{}", m.rows(), m.cols()),
        ));
    };
    if asym > SYMMETRY_TOLERANCE * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    Ok(if asym > 0.0 {
        m.symmetrized()
    } else {
        m.clone()
    })
}

fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let nv = norm2(&v);
        if nv > 0.0 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

fn normalize_sign(v: &mut [f64]) {
    if let Some(&first) = v.iter().find(|x| **x != 0.0) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Spectral norm of a symmetric PSD matrix by power iteration.
///
/// Starts from a seeded random unit vector and repeats
/// `v ← TM·v / ‖TM·v‖₂` until successive iterates differ by less than
/// `res_stop` (or `max_iters` is hit). If `TM·v` vanishes the matrix acts as
/// zero along the iterate and the estimate is `0`.
pub fn power_iteration(tm: &Matrix, cfg: &PowerIterationConfig) -> Result<SpectralEstimate> {
    run_power_iteration(tm, cfg, None)
}

/// Like [`power_iteration`], also returning the Rayleigh quotients
/// `v_iᵀ·TM·v_i` of every iterate, starting with `v_0`.
pub fn power_iteration_trace(
    tm: &Matrix,
    cfg: &PowerIterationConfig,
) -> Result<(SpectralEstimate, Vec<f64>)> {
    let mut trace = Vec::new();
    let est = run_power_iteration(tm, cfg, Some(&mut trace))?;
    Ok((est, trace))
}

fn run_power_iteration(
    tm: &Matrix,
    cfg: &PowerIterationConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SpectralEstimate> {
    if !(cfg.res_stop > 0.0) {
        return Err(Error::Config(format!(
            "res_stop must be positive, got {}",
            cfg.res_stop
        )));
    }
    let tm = check_symmetric(tm)?;
    let n = tm.rows();
    if n == 0 {
        return Ok(SpectralEstimate {
            value: 0.0,
            iterations: 0,
            final_residual: 0.0,
            converged: true,
            vector: Vec::new(),
        });
    }

    let mut v = random_unit(n, cfg.seed);
    let mut value = 0.0;
    let mut res = f64::INFINITY;
    let mut iterations = 0;

    while iterations < cfg.max_iters.max(1) {
        iterations += 1;
        let w = tm.matvec(&v)?;
        let nw = norm2(&w);
        if let Some(t) = trace.as_deref_mut() {
            t.push(dot(&v, &w));
        }
        if nw == 0.0 {
            normalize_sign(&mut v);
            return Ok(SpectralEstimate {
                value: 0.0,
                iterations,
                final_residual: 0.0,
                converged: true,
                vector: v,
            });
        }
        let next: Vec<f64> = w.iter().map(|x| x / nw).collect();
        res = next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        value = dot(&next, &w);
        v = next;
        if res < cfg.res_stop {
            break;
        }
    }

    if let Some(t) = trace {
        let w = tm.matvec(&v)?;
        t.push(dot(&v, &w));
    }
    normalize_sign(&mut v);
    Ok(SpectralEstimate {
        value,
        iterations,
        final_residual: res,
        converged: res < cfg.res_stop,
        vector: v,
    })
}

/// Top singular triple of `w` from power iteration on `wᵀw`.
///
/// A zero matrix yields `σ1 = 0` with `u1`, `v1` set to the first canonical
/// basis vectors.
pub fn top_singular_pair(w: &Matrix, cfg: &PowerIterationConfig) -> Result<SingularTriple> {
    if w.rows() == 0 || w.cols() == 0 {
        return Err(Error::dim(
            "top_singular_pair",
            "non-empty matrix",
            "empty matrix",
        ));
    }
    let est = power_iteration(&w.gram(), cfg)?;
    let v1 = est.vector;
    let wv = w.matvec(&v1)?;
    let nwv = norm2(&wv);
    if est.value <= 0.0 || nwv == 0.0 {
        let mut u1 = vec![0.0; w.rows()];
        u1[0] = 1.0;
        let mut v1 = vec![0.0; w.cols()];
        v1[0] = 1.0;
        return Ok(SingularTriple {
            sigma1: 0.0,
            u1,
            v1,
        });
    }
    Ok(SingularTriple {
        sigma1: est.value.sqrt(),
        u1: wv.iter().map(|x| x / nwv).collect(),
        v1,
    })
}

/// Rescales column `j` of both matrices by `1 / max(‖prev[:, j]‖₂, eps)`.
///
/// Using the front map's norm for both sides keeps `next = W·prev` intact
/// after normalization.
pub fn normalize_columns_paired(
    prev: &Matrix,
    next: &Matrix,
    eps: f64,
) -> Result<(Matrix, Matrix)> {
    if prev.cols() != next.cols() {
        return Err(Error::dim(
            "normalize_columns_paired",
            format!("{} columns", prev.cols()),
            format!("{} columns", next.cols()),
        ));
    }
    let divisors: Vec<f64> = prev
        .column_norms()
        .into_iter()
        .map(|n| n.max(eps))
        .collect();
    Ok((prev.scale_columns(&divisors), next.scale_columns(&divisors)))
}
