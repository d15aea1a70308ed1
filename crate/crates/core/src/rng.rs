//! Counter-based random stream: every draw is addressed by
//! `(seed, k, index)` so per-iteration noise is reproducible regardless of the
//! order in which batches are requested.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// Draw index of the Laplace variable `eta_k`.
pub const DRAW_LAPLACE: u64 = 0;
/// Draw index of the uniform variable `gamma_k`.
pub const DRAW_UNIFORM: u64 = 1;
/// Draw index of the operator coin of the mixed mechanism.
pub const DRAW_COIN: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64_at(&self, stream: u64, index: u64) -> u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        // two 32-bit words per u64 draw
        rng.set_word_pos(u128::from(index) * 2);
        rng.next_u64()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&self, stream: u64, index: u64) -> f64 {
        let bits = self.next_u64_at(stream, index) >> 11;
        (bits as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Uniform on the open interval `(-1/2, 1/2)`, never exactly zero.
    pub fn centered(&self, stream: u64, index: u64) -> f64 {
        let bits = self.next_u64_at(stream, index) >> 11;
        (bits as f64 + 0.5) / (1u64 << 53) as f64 - 0.5
    }
}
