//! Lipschitz-continuity guided knowledge distillation for small dense
//! networks.
//!
//! A teacher's per-block spectral behaviour is summarized by transmitting
//! matrices (TMs) built from feature maps captured at block boundaries. The
//! dominant eigenvalue of each TM is estimated with power iteration and a
//! student is trained to match the teacher's profile alongside the usual
//! cross-entropy and soft-label distillation losses.
//!
//! Module map:
//! - [`linalg`]: dense matrices, power iteration, Jacobi oracle.
//! - [`network`]: bias-free dense / residual-dense networks with manual
//!   backpropagation and a text model format.
//! - [`lipschitz`]: transmitting matrices and network Lipschitz profiles.
//! - [`distillation`]: the loss family and the regularized training step.
//! - [`harness`]: datasets, configuration and experiment drivers used by
//!   the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distillation;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lipschitz;
pub mod network;
pub mod rng;

pub use distillation::{
    distill_step, lip_gradient_terms, loss_ce, loss_kd, loss_lip, total_loss, BlockPairing,
    DistillConfig, LossBreakdown, RegularizationTerm, Sgd, StepReport,
};
pub use error::{Error, Result};
pub use linalg::{
    jacobi_top_eigenvalue, normalize_columns_paired, power_iteration, random_orthogonal,
    top_singular_pair, Matrix, PowerIterationConfig, SingularTriple, SpectralEstimate,
};
pub use lipschitz::{
    build_tm, feature_independence_score, profile_network, LipschitzProfile, TmForm, TmSource,
    TransmittingMatrix,
};
pub use network::{
    base_gradients, build_network, forward_collect, ActivationKind, Block, BlockKind,
    FeatureMapBatch, Gradients, Network,
};
