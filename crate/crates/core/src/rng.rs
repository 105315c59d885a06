//! Reproducible Gaussian streams keyed by seed, level and replication.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Identifies an independent stream: one per (level, replication) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub level: u32,
    pub replication: u32,
}

impl StreamId {
    pub fn new(level: u32, replication: u32) -> Self {
        Self { level, replication }
    }

    fn word(self) -> u64 {
        (u64::from(self.level) << 32) | u64::from(self.replication)
    }
}

/// Standard normal draws from a ChaCha8 keystream.
///
/// The seed fixes the key and the stream id selects the ChaCha stream, so
/// distinct ids never share keystream blocks.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    seed: u64,
    id: StreamId,
    rng: ChaCha8Rng,
}

impl GaussianStream {
    pub fn new(seed: u64, id: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id.word());
        Self { seed, id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Fills `out` with independent `N(0, variance)` draws.
    #[inline]
    pub fn fill_normal(&mut self, variance: f64, out: &mut [f64]) {
        let sd = variance.sqrt();
        for v in out {
            *v = sd * self.standard_normal();
        }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}
