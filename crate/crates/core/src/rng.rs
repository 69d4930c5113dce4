//! Seeded pseudo-random numbers for reproducible matrix generation.
//!
//! The generator is SplitMix64: a 64-bit state advanced by the golden-ratio
//! increment `0x9E3779B97F4A7C15`, finalized with two xor-shift/multiply
//! rounds. The algorithm is fixed here on purpose — matrices generated from a
//! seed must reproduce bit-for-bit across builds and library versions, so the
//! stream cannot be delegated to an external crate whose internals may change.
//!
//! Doubles in `[0, 1)` take the top 53 bits of the output word; the symmetric
//! variant maps that to `[-1, 1)`.

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Uniform integer in `[0, bound)`. Modulo bias is irrelevant for the
    /// test-instance sizes this is used for.
    pub fn next_below(&mut self, bound: usize) -> usize {
        (self.next_u64() % bound as u64) as usize
    }
}
