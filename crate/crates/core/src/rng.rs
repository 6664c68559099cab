//! Minimal deterministic PRNG for seeded searches.
//!
//! Randomized searches (embedding-constant restarts, depth directions) must be
//! byte-reproducible across builds and platforms, so we carry our own small
//! generator instead of depending on an external crate whose stream may change
//! between versions.

/// splitmix64: full-period 64-bit generator, used both directly and to seed
/// sub-streams (one independent stream per restart index).
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Derive an independent sub-stream, e.g. one per restart.
    pub fn substream(&self, index: u64) -> Rng {
        let mut r = Rng::new(self.state ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index + 1)));
        r.next_u64();
        r
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-1, 1).
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }
}
