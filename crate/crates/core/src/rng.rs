//! Seeded random streams.
//!
//! Every stochastic component takes an explicit `u64` seed. A run-level
//! master seed is split into independent streams by fixed offsets so that
//! e.g. changing the shuffle order never perturbs weight initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams derived from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Shuffle,
    PowerIteration,
    Data,
    Eval,
    TeacherInit,
}

impl Stream {
    const fn offset(self) -> u64 {
        match self {
            Stream::Init => 0x1000,
            Stream::Shuffle => 0x2000,
            Stream::PowerIteration => 0x3000,
            Stream::Data => 0x4000,
            Stream::Eval => 0x5000,
            Stream::TeacherInit => 0x6000,
        }
    }

    pub fn seed(self, master: u64) -> u64 {
        master
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(self.offset())
    }
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Fisher–Yates permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
