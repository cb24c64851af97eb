//! Bias-free dense and residual-dense networks.
//!
//! Batches are `d x N` matrices with one sample per column. A dense block
//! computes `act(W·x)`; a residual block computes `x + W_b·act(W_a·x)` with
//! square `W_a`, `W_b`. The final block of a built network uses the identity
//! activation so the network emits raw logits.

mod activation;
pub mod io;

pub use activation::ActivationKind;

use crate::distillation::output_gradient;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{gaussian_matrix, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Dense,
    ResidualDense,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Dense => "dense",
            BlockKind::ResidualDense => "residual_dense",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dense" => Some(BlockKind::Dense),
            "residual_dense" | "residual" => Some(BlockKind::ResidualDense),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Dense {
        weight: Matrix,
        activation: ActivationKind,
    },
    /// `x + outer · act(inner · x)`
    Residual {
        inner: Matrix,
        outer: Matrix,
        activation: ActivationKind,
    },
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::Dense { .. } => BlockKind::Dense,
            Block::Residual { .. } => BlockKind::ResidualDense,
        }
    }

    pub fn activation(&self) -> ActivationKind {
        match self {
            Block::Dense { activation, .. } | Block::Residual { activation, .. } => *activation,
        }
    }

    /// The block's main weight (`W_a` for residual blocks).
    pub fn weight(&self) -> &Matrix {
        match self {
            Block::Dense { weight, .. } => weight,
            Block::Residual { inner, .. } => inner,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight().cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight().rows()
    }

    /// Trainable matrices in a fixed order (`[W]` or `[W_a, W_b]`).
    pub fn params(&self) -> Vec<&Matrix> {
        match self {
            Block::Dense { weight, .. } => vec![weight],
            Block::Residual { inner, outer, .. } => vec![inner, outer],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Block::Dense { weight, .. } => vec![weight],
            Block::Residual { inner, outer, .. } => vec![inner, outer],
        }
    }

    fn validate(&self) -> Result<()> {
        if let Block::Residual { inner, outer, .. } = self {
            if !inner.is_square() || inner.shape() != outer.shape() {
                return Err(Error::Network(format!(
                    "residual block needs equal square weights, got {}x{} and {}x{}",
                    inner.rows(),
                    inner.cols(),
                    outer.rows(),
                    outer.cols()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    blocks: Vec<Block>,
}

impl Network {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Network("network needs at least one block".into()));
        }
        for (k, b) in blocks.iter().enumerate() {
            b.validate()?;
            if k > 0 && blocks[k - 1].out_dim() != b.in_dim() {
                return Err(Error::Network(format!(
                    "block {} expects width {} but block {} emits {}",
                    k + 1,
                    b.in_dim(),
                    k,
                    blocks[k - 1].out_dim()
                )));
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Block] {
        &mut self.blocks
    }

    /// Number of blocks `L`.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    /// `d_0, …, d_L`
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.blocks[0].in_dim())
            .chain(self.blocks.iter().map(Block::out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.blocks[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.blocks[self.blocks.len() - 1].out_dim()
    }

    /// Forward pass returning logits only.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(forward_collect(self, batch)?.0)
    }

    /// Single-sample evaluation `f(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let col = Matrix::from_columns(&[x]);
        Ok(self.forward(&col)?.into_vec())
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        let logits = self.forward(batch)?;
        Ok((0..logits.cols())
            .map(|j| argmax_column(&logits, j))
            .collect())
    }
}

pub(crate) fn argmax_column(m: &Matrix, j: usize) -> usize {
    let mut best = 0;
    for i in 1..m.rows() {
        if m[(i, j)] > m[(best, j)] {
            best = i;
        }
    }
    best
}

/// Activations of a batch at one block boundary (index 0 is the input).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapBatch {
    pub block_index: usize,
    pub data: Matrix,
}

/// Builds a network with Gaussian weights scaled by `init_scale / √d_in`.
///
/// Hidden blocks use `activation`; a dense final block uses the identity.
pub fn build_network(
    widths: &[usize],
    kinds: &[BlockKind],
    activation: ActivationKind,
    init_scale: f64,
    seed: u64,
) -> Result<Network> {
    if widths.len() < 2 {
        return Err(Error::Network("need at least two widths".into()));
    }
    if kinds.len() != widths.len() - 1 {
        return Err(Error::Network(format!(
            "{} widths need {} block kinds, got {}",
            widths.len(),
            widths.len() - 1,
            kinds.len()
        )));
    }
    if widths.contains(&0) {
        return Err(Error::Network("widths must be positive".into()));
    }
    let mut rng = seeded(seed);
    let last = kinds.len() - 1;
    let mut blocks = Vec::with_capacity(kinds.len());
    for (k, &kind) in kinds.iter().enumerate() {
        let (d_in, d_out) = (widths[k], widths[k + 1]);
        let scale = init_scale / (d_in as f64).sqrt();
        let block = match kind {
            BlockKind::Dense => Block::Dense {
                weight: gaussian_matrix(d_out, d_in, &mut rng).scale(scale),
                activation: if k == last {
                    ActivationKind::Identity
                } else {
                    activation
                },
            },
            BlockKind::ResidualDense => {
                if d_in != d_out {
                    return Err(Error::Network(format!(
                        "residual block {} needs equal widths, got {d_in} -> {d_out}",
                        k + 1
                    )));
                }
                Block::Residual {
                    inner: gaussian_matrix(d_out, d_in, &mut rng).scale(scale),
                    outer: gaussian_matrix(d_out, d_in, &mut rng).scale(scale),
                    activation,
                }
            }
        };
        blocks.push(block);
    }
    Network::new(blocks)
}

/// Per-block values kept for the backward pass.
struct BlockCache {
    input: Matrix,
    pre: Matrix,
    /// `act(pre)`; for residual blocks the branch hidden state.
    hidden: Matrix,
}

fn forward_cached(
    net: &Network,
    batch: &Matrix,
) -> Result<(Vec<BlockCache>, Vec<FeatureMapBatch>)> {
    if batch.rows() != net.input_dim() {
        return Err(Error::dim(
            "forward",
            format!("batch with {} rows", net.input_dim()),
            format!("{}x{}", batch.rows(), batch.cols()),
        ));
    }
    let mut caches = Vec::with_capacity(net.depth());
    let mut maps = Vec::with_capacity(net.depth() + 1);
    maps.push(FeatureMapBatch {
        block_index: 0,
        data: batch.clone(),
    });
    let mut x = batch.clone();
    for (k, block) in net.blocks.iter().enumerate() {
        let act = block.activation();
        let (pre, hidden, out) = match block {
            Block::Dense { weight, .. } => {
                let pre = weight.matmul(&x)?;
                let out = pre.map(|v| act.apply(v));
                (pre, out.clone(), out)
            }
            Block::Residual { inner, outer, .. } => {
                let pre = inner.matmul(&x)?;
                let hidden = pre.map(|v| act.apply(v));
                let out = x.add(&outer.matmul(&hidden)?)?;
                (pre, hidden, out)
            }
        };
        maps.push(FeatureMapBatch {
            block_index: k + 1,
            data: out.clone(),
        });
        caches.push(BlockCache {
            input: x,
            pre,
            hidden,
        });
        x = out;
    }
    Ok((caches, maps))
}

/// Forward pass capturing the feature maps at every block boundary.
///
/// `maps[0]` is the input batch and `maps[k]` the output of block `k`, so
/// the logits equal `maps[L].data`.
pub fn forward_collect(net: &Network, batch: &Matrix) -> Result<(Matrix, Vec<FeatureMapBatch>)> {
    let (_, maps) = forward_cached(net, batch)?;
    let logits = maps[maps.len() - 1].data.clone();
    Ok((logits, maps))
}

/// Weight gradients laid out like [`Block::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<Matrix>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            blocks: net
                .blocks()
                .iter()
                .map(|b| {
                    b.params()
                        .iter()
                        .map(|p| Matrix::zeros(p.rows(), p.cols()))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Gradients) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .zip(other.blocks.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }
}

/// Base loss value and its analytic weight gradients.
#[derive(Debug, Clone)]
pub struct BaseLossGrad {
    pub ce: f64,
    pub kd: f64,
    pub logits: Matrix,
    /// Feature maps captured during the forward pass.
    pub maps: Vec<FeatureMapBatch>,
    pub grads: Gradients,
}

/// Gradients of `CE + kd_weight · KD` with respect to every weight matrix.
///
/// `teacher_logits` may be omitted when `kd_weight` is zero.
pub fn base_gradients(
    net: &Network,
    batch: &Matrix,
    labels: &[usize],
    teacher_logits: Option<&Matrix>,
    temperature: f64,
    kd_weight: f64,
) -> Result<Gradients> {
    Ok(base_loss_and_gradients(net, batch, labels, teacher_logits, temperature, kd_weight)?.grads)
}

pub fn base_loss_and_gradients(
    net: &Network,
    batch: &Matrix,
    labels: &[usize],
    teacher_logits: Option<&Matrix>,
    temperature: f64,
    kd_weight: f64,
) -> Result<BaseLossGrad> {
    let (caches, maps) = forward_cached(net, batch)?;
    let logits = maps[maps.len() - 1].data.clone();
    let out = output_gradient(&logits, labels, teacher_logits, temperature, kd_weight)?;

    let mut grads = Vec::with_capacity(net.depth());
    let mut upstream = out.dlogits;
    for (block, cache) in net.blocks.iter().zip(&caches).rev() {
        let act = block.activation();
        match block {
            Block::Dense { weight, .. } => {
                let dpre = upstream.hadamard(&cache.pre.map(|v| act.derivative(v)))?;
                grads.push(vec![dpre.matmul_t(&cache.input)?]);
                upstream = weight.t_matmul(&dpre)?;
            }
            Block::Residual { inner, outer, .. } => {
                let d_outer = upstream.matmul_t(&cache.hidden)?;
                let dhidden = outer.t_matmul(&upstream)?;
                let dpre = dhidden.hadamard(&cache.pre.map(|v| act.derivative(v)))?;
                let d_inner = dpre.matmul_t(&cache.input)?;
                grads.push(vec![d_inner, d_outer]);
                upstream = upstream.add(&inner.t_matmul(&dpre)?)?;
            }
        }
    }
    grads.reverse();
    Ok(BaseLossGrad {
        ce: out.ce,
        kd: out.kd,
        logits,
        maps,
        grads: Gradients { blocks: grads },
    })
}
