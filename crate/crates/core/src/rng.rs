//! Reproducible random numbers.
//!
//! [`Rng`] wraps the ChaCha8 stream cipher used as a counter-based generator.
//! A generator is identified by `(seed, stream)`: the 64-bit seed is expanded
//! into the 256-bit ChaCha key by `SeedableRng::seed_from_u64`, and the stream
//! id selects one of 2^64 independent keystreams for that key. The position
//! inside a keystream is a 128-bit word counter, so the complete state is
//! `(seed, stream, word_pos)` and can be saved and restored exactly.
//!
//! [`Rng::fork`] derives a child stream from a key without advancing the
//! parent. Augmentation, shuffling and initialisation all draw from forks
//! keyed by what they are for (epoch, example index, ...), which keeps results
//! independent of consumption order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

/// Serializable generator position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

/// SplitMix64 finalizer, used to scatter fork keys over the stream space.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Child generator at the start of stream `mix(stream, key)`.
    pub fn fork(&self, key: u64) -> Rng {
        Rng::with_stream(self.seed, mix64(self.stream ^ mix64(key)))
    }

    pub fn state(&self) -> RngState {
        RngState { seed: self.seed, stream: self.stream, word_pos: self.inner.get_word_pos() }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut rng = Rng::with_stream(state.seed, state.stream);
        rng.inner.set_word_pos(state.word_pos);
        rng
    }

    /// Uniform integer in `[0, bound)`.
    pub fn below(&mut self, bound: usize) -> usize {
        use rand::Rng as _;
        self.random_range(0..bound)
    }

    /// Uniform float in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        use rand::Rng as _;
        self.random::<f64>()
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
