//! Transmitting matrices and block-wise Lipschitz profiles.
//!
//! For a block mapping front maps `F` (`d_in x N`) to latter maps `G`
//! (`d_out x N`), columns of both are rescaled by the norms of `F`'s columns,
//! then `A = Fᵀ·G` and `TM = AᵀA`. When the normalized front columns are
//! orthonormal and square, `σ1(TM) = σ1(WᵀW)`; otherwise the statistic is an
//! approximation whose quality [`feature_independence_score`] reports.
//!
//! `Fᵀ·G` only exists when the block preserves width. For a rectangular
//! block the TM is taken as `GᵀG`, which is `FᵀWᵀ(FFᵀ)WF` with `FFᵀ`
//! replaced by the identity; both forms agree whenever `F` is square
//! orthogonal.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    norm2, normalize_columns_paired, power_iteration, top_singular_pair, Matrix,
    PowerIterationConfig, DEFAULT_COLUMN_EPS,
};
use crate::network::{forward_collect, Block, FeatureMapBatch, Network};
use crate::rng::{gaussian, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmSource {
    Standard,
    Residual,
}

/// Which product the TM was formed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmForm {
    /// `(FᵀG)ᵀ(FᵀG)`, width-preserving blocks.
    CrossProduct,
    /// `GᵀG`, rectangular blocks.
    LatterGram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmittingMatrix {
    pub block_index: usize,
    /// `N x N`, symmetric PSD.
    pub data: Matrix,
    pub source: TmSource,
    pub form: TmForm,
}

pub fn build_tm(
    front: &FeatureMapBatch,
    latter: &FeatureMapBatch,
    eps: f64,
) -> Result<TransmittingMatrix> {
    let (f, g) = normalize_columns_paired(&front.data, &latter.data, eps)?;
    let (data, form) = if f.rows() == g.rows() {
        (f.t_matmul(&g)?.gram(), TmForm::CrossProduct)
    } else {
        (g.gram(), TmForm::LatterGram)
    };
    Ok(TransmittingMatrix {
        block_index: latter.block_index,
        data,
        source: TmSource::Standard,
        form,
    })
}

/// Max absolute off-diagonal entry of the normalized `FMᵀFM`; 0 for
/// mutually orthogonal columns.
pub fn feature_independence_score(fm: &FeatureMapBatch) -> f64 {
    let norms: Vec<f64> = fm
        .data
        .column_norms()
        .into_iter()
        .map(|n| n.max(DEFAULT_COLUMN_EPS))
        .collect();
    let gram = fm.data.scale_columns(&norms).gram();
    let n = gram.rows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max(gram[(i, j)].abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzProfile {
    /// `σ1(TM^k)` for every block, in block order.
    pub per_block_sn: Vec<f64>,
    /// Per-block Lipschitz factors from the block weights: `lip(σ)·σ1(W)`
    /// for dense blocks, `1 + lip(σ)·σ1(W_b)·σ1(W_a)` for residual ones.
    pub block_factors: Vec<f64>,
    /// Product of `block_factors`, a certified bound on `‖f‖_Lip`.
    pub upper_bound: f64,
    /// TM-based estimate of the same product: `√σ1(TM)` per dense block
    /// and the residual factor for residual blocks.
    pub tm_estimate: f64,
    pub batch_size: usize,
}

/// `σ1(TM)` for the given 1-based block indices, from already captured maps.
pub fn block_spectral_norms(
    net: &Network,
    maps: &[FeatureMapBatch],
    blocks: &[usize],
    cfg: &PowerIterationConfig,
) -> Result<Vec<f64>> {
    blocks
        .iter()
        .map(|&k| {
            if k == 0 || k > net.depth() {
                return Err(Error::Network(format!(
                    "no block {k} in a depth-{} network",
                    net.depth()
                )));
            }
            let tm = build_tm(&maps[k - 1], &maps[k], DEFAULT_COLUMN_EPS)?;
            let cfg = cfg.with_seed(cfg.seed.wrapping_add(k as u64));
            Ok(power_iteration(&tm.data, &cfg)?.value)
        })
        .collect()
}

/// Lipschitz factor of one block computed from its weights.
pub fn block_factor(block: &Block, cfg: &PowerIterationConfig) -> Result<f64> {
    let lip = block.activation().lipschitz_constant();
    Ok(match block {
        Block::Dense { weight, .. } => lip * top_singular_pair(weight, cfg)?.sigma1,
        Block::Residual { inner, outer, .. } => {
            1.0 + lip
                * top_singular_pair(inner, cfg)?.sigma1
                * top_singular_pair(outer, cfg)?.sigma1
        }
    })
}

pub fn profile_network(
    net: &Network,
    batch: &Matrix,
    cfg: &PowerIterationConfig,
) -> Result<LipschitzProfile> {
    if batch.cols() == 0 {
        return Err(Error::dim(
            "profile_network",
            "non-empty batch",
            "0 columns",
        ));
    }
    let (_, maps) = forward_collect(net, batch)?;
    let all: Vec<usize> = (1..=net.depth()).collect();
    let per_block_sn = block_spectral_norms(net, &maps, &all, cfg)?;
    let block_factors = net
        .blocks()
        .iter()
        .map(|b| block_factor(b, cfg))
        .collect::<Result<Vec<_>>>()?;
    let tm_estimate = net
        .blocks()
        .iter()
        .zip(&block_factors)
        .zip(&per_block_sn)
        .map(|((b, &factor), &sn)| match b {
            Block::Dense { .. } => sn.max(0.0).sqrt(),
            Block::Residual { .. } => factor,
        })
        .product();
    Ok(LipschitzProfile {
        upper_bound: block_factors.iter().product(),
        per_block_sn,
        block_factors,
        tm_estimate,
        batch_size: batch.cols(),
    })
}

/// One row of the analyzer table.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub block_index: usize,
    pub sn_tm: f64,
    pub sqrt_sn_tm: f64,
    /// `σ1(W)` for dense blocks.
    pub sn_weight_exact: Option<f64>,
    /// Independence score of the block's normalized input maps.
    pub independence_score: f64,
}

pub fn block_reports(
    net: &Network,
    batch: &Matrix,
    cfg: &PowerIterationConfig,
) -> Result<Vec<BlockReport>> {
    let (_, maps) = forward_collect(net, batch)?;
    let all: Vec<usize> = (1..=net.depth()).collect();
    let sns = block_spectral_norms(net, &maps, &all, cfg)?;
    net.blocks()
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let sn_weight_exact = match b {
                Block::Dense { weight, .. } => Some(top_singular_pair(weight, cfg)?.sigma1),
                Block::Residual { .. } => None,
            };
            Ok(BlockReport {
                block_index: k + 1,
                sn_tm: sns[k],
                sqrt_sn_tm: sns[k].max(0.0).sqrt(),
                sn_weight_exact,
                independence_score: feature_independence_score(&maps[k]),
            })
        })
        .collect()
}

/// Largest observed `‖f(x) − f(y)‖₂ / ‖x − y‖₂` over `pairs` random pairs.
///
/// `x` is a random column of `anchors` (standard normal when `None`); `y`
/// perturbs `x` by Gaussian noise, alternating between a wide scale and a
/// narrow one so both global and local slopes are probed.
pub fn empirical_max_ratio(
    net: &Network,
    anchors: Option<&Matrix>,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let d = net.input_dim();
    if let Some(a) = anchors {
        if a.rows() != d || a.cols() == 0 {
            return Err(Error::dim(
                "empirical_max_ratio",
                format!("{d} x N anchors"),
                format!("{}x{}", a.rows(), a.cols()),
            ));
        }
    }
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for p in 0..pairs {
        let x: Vec<f64> = match anchors {
            Some(a) => a.column(rng.random_range(0..a.cols())),
            None => (0..d).map(|_| gaussian(&mut rng)).collect(),
        };
        let scale = if p % 2 == 0 { 1.0 } else { 1e-2 };
        let y: Vec<f64> = x.iter().map(|xi| xi + scale * gaussian(&mut rng)).collect();
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dn = norm2(&diff);
        if dn == 0.0 {
            continue;
        }
        let fx = net.eval(&x)?;
        let fy = net.eval(&y)?;
        let out: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
        worst = worst.max(norm2(&out) / dn);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{jacobi_eigenvalues, jacobi_top_eigenvalue, random_orthogonal};
    use crate::network::{build_network, ActivationKind, BlockKind};
    use crate::rng::gaussian_matrix;

    fn fm(k: usize, data: Matrix) -> FeatureMapBatch {
        FeatureMapBatch {
            block_index: k,
            data,
        }
    }

    fn single_dense(weight: Matrix) -> Network {
        Network::new(vec![Block::Dense {
            weight,
            activation: ActivationKind::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn orthonormal_self_product_is_identity() {
        let q = random_orthogonal(5, 3);
        let tm = build_tm(&fm(0, q.clone()), &fm(1, q.clone()), 1e-12).unwrap();
        assert!(tm.data.max_abs_diff(&Matrix::identity(5)) < 1e-12);
        let tm2 = build_tm(&fm(0, q.clone()), &fm(1, q.scale(2.0)), 1e-12).unwrap();
        assert!(tm2.data.max_abs_diff(&Matrix::identity(5).scale(4.0)) < 1e-12);
        assert_eq!(tm2.block_index, 1);
        assert_eq!(tm2.form, TmForm::CrossProduct);
    }

    #[test]
    fn rectangular_block_uses_latter_gram() {
        let front = random_orthogonal(4, 2);
        let w = gaussian_matrix(7, 4, &mut seeded(5));
        let tm = build_tm(
            &fm(0, front.clone()),
            &fm(1, w.matmul(&front).unwrap()),
            1e-12,
        )
        .unwrap();
        assert_eq!(tm.form, TmForm::LatterGram);
        let lhs = jacobi_top_eigenvalue(&tm.data).unwrap();
        let rhs = jacobi_top_eigenvalue(&w.gram()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs);
    }

    #[test]
    fn square_orthogonal_front_recovers_weight_statistic() {
        let front = random_orthogonal(6, 10);
        let w = gaussian_matrix(6, 6, &mut seeded(11));
        let tm = build_tm(
            &fm(0, front.clone()),
            &fm(1, w.matmul(&front).unwrap()),
            1e-12,
        )
        .unwrap();
        let lhs = jacobi_top_eigenvalue(&tm.data).unwrap();
        let rhs = jacobi_top_eigenvalue(&w.gram()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-8 * rhs);
    }

    #[test]
    fn tm_is_symmetric_psd() {
        let front = gaussian_matrix(4, 9, &mut seeded(1));
        let latter = gaussian_matrix(3, 9, &mut seeded(2));
        let tm = build_tm(&fm(0, front), &fm(1, latter), 1e-12).unwrap();
        assert_eq!(tm.data.max_asymmetry(), Some(0.0));
        let min = *jacobi_eigenvalues(&tm.data).unwrap().last().unwrap();
        assert!(min >= -1e-9 * tm.data.max_abs().max(1.0));
        assert!(build_tm(
            &fm(0, Matrix::zeros(2, 3)),
            &fm(1, Matrix::zeros(2, 4)),
            1e-12
        )
        .is_err());
    }

    #[test]
    fn independence_score_fixtures() {
        assert!(feature_independence_score(&fm(0, random_orthogonal(4, 2))) < 1e-12);
        let dup = Matrix::from_columns(&[[1.0, 2.0, 2.0], [1.0, 2.0, 2.0]]);
        assert!((feature_independence_score(&fm(0, dup)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn independence_score_matches_pairwise_oracle() {
        let m = gaussian_matrix(32, 16, &mut seeded(3));
        let cols: Vec<Vec<f64>> = (0..16).map(|j| m.column(j)).collect();
        let mut oracle = 0.0f64;
        for i in 0..16 {
            for j in 0..16 {
                if i == j {
                    continue;
                }
                let mut d = 0.0;
                let (mut ni, mut nj) = (0.0, 0.0);
                for (a, b) in cols[i].iter().zip(&cols[j]) {
                    d += a * b;
                    ni += a * a;
                    nj += b * b;
                }
                oracle = oracle.max((d / (ni.sqrt() * nj.sqrt())).abs());
            }
        }
        assert!((feature_independence_score(&fm(0, m)) - oracle).abs() < 1e-12);
    }

    #[test]
    fn profile_fixtures() {
        let cfg = PowerIterationConfig {
            res_stop: 1e-10,
            ..Default::default()
        };
        let batch = random_orthogonal(2, 5);
        let p = profile_network(&single_dense(Matrix::identity(2)), &batch, &cfg).unwrap();
        assert!((p.per_block_sn[0] - 1.0).abs() < 1e-12);
        assert!((p.upper_bound - 1.0).abs() < 1e-12);

        let p = profile_network(&single_dense(Matrix::diag(&[3.0, 1.0])), &batch, &cfg).unwrap();
        assert!((p.per_block_sn[0] - 9.0).abs() < 1e-8);
        assert!((p.upper_bound - 3.0).abs() < 1e-8);
        assert!((p.tm_estimate - 3.0).abs() < 1e-8);
        assert_eq!(p.batch_size, 2);
    }

    #[test]
    fn scale_covariance() {
        let cfg = PowerIterationConfig {
            res_stop: 1e-12,
            ..Default::default()
        };
        let net = build_network(
            &[4, 6, 3],
            &[BlockKind::Dense; 2],
            ActivationKind::Relu,
            1.0,
            7,
        )
        .unwrap();
        let batch = gaussian_matrix(4, 10, &mut seeded(7));
        let base = profile_network(&net, &batch, &cfg).unwrap();
        let c = 2.5;
        let mut scaled = net.clone();
        if let Block::Dense { weight, .. } = &mut scaled.blocks_mut()[1] {
            *weight = weight.scale(c);
        }
        let p = profile_network(&scaled, &batch, &cfg).unwrap();
        assert!(
            (p.per_block_sn[1] - c * c * base.per_block_sn[1]).abs() < 1e-8 * p.per_block_sn[1]
        );
        assert!((p.per_block_sn[0] - base.per_block_sn[0]).abs() < 1e-12 * base.per_block_sn[0]);
        assert!((p.upper_bound - c * base.upper_bound).abs() < 1e-8 * p.upper_bound);
    }

    #[test]
    fn profile_is_deterministic_and_bounds_samples() {
        let cfg = PowerIterationConfig::default();
        let net = build_network(
            &[3, 8, 2],
            &[BlockKind::Dense; 2],
            ActivationKind::Relu,
            1.5,
            1,
        )
        .unwrap();
        let batch = gaussian_matrix(3, 16, &mut seeded(4));
        let a = profile_network(&net, &batch, &cfg).unwrap();
        assert_eq!(a, profile_network(&net, &batch, &cfg).unwrap());
        let ratio = empirical_max_ratio(&net, None, 10_000, 5).unwrap();
        assert!(ratio <= a.upper_bound, "{ratio} > {}", a.upper_bound);
    }

    #[test]
    fn residual_factor() {
        let inner = Matrix::diag(&[2.0, 0.5]);
        let outer = Matrix::diag(&[0.5, 3.0]);
        let net = Network::new(vec![Block::Residual {
            inner,
            outer,
            activation: ActivationKind::Relu,
        }])
        .unwrap();
        let f = block_factor(&net.blocks()[0], &PowerIterationConfig::default()).unwrap();
        assert!((f - 7.0).abs() < 1e-9);
        let batch = gaussian_matrix(2, 4, &mut seeded(0));
        let p = profile_network(&net, &batch, &PowerIterationConfig::default()).unwrap();
        assert!((p.tm_estimate - p.upper_bound).abs() < 1e-15);
    }
}
