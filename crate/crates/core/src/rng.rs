//! SplitMix64, the fixed generator behind every seeded simulation.
//!
//! State advances by the golden-ratio increment `0x9E3779B97F4A7C15` and each
//! output is the standard SplitMix64 finalizer of the new state. Seeding is the
//! raw `u64` seed as initial state, so the stream is bit-identical on every
//! platform and in any reimplementation.

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(Self::GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Seed for the `k`-th independent sub-stream derived from `seed`.
    pub fn derive(seed: u64, k: u64) -> u64 {
        let mut g = SplitMix64::new(seed);
        let mut out = g.next_u64();
        for _ in 0..k {
            out = g.next_u64();
        }
        out
    }
}
