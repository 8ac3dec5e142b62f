//! Portable seeded random source.
//!
//! Every stochastic step in the pipeline (splits, shuffles, negative
//! sampling, initialisation) draws from [`SplitMix64`] through the helpers
//! here, so a run is fully determined by its seed and can be replayed in any
//! language that implements the same four primitives:
//!
//! * `next_u64`: SplitMix64 (Steele, Lea and Flood), 64-bit state, increment
//!   `0x9E3779B97F4A7C15`, finaliser constants `0xBF58476D1CE4E5B9` and
//!   `0x94D049BB133111EB` with shifts 30, 27, 31.
//! * `next_f64`: top 53 bits of `next_u64` scaled by `2^-53`, in `[0, 1)`.
//! * `below(n)`: rejection sampling. Draws `x = next_u64()` until
//!   `x < 2^64 - (2^64 mod n)` and returns `x mod n`.
//! * `shuffle`: Fisher-Yates from the last index down, swapping `i` with
//!   `below(i + 1)`.

/// SplitMix64 generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Generator for a sub-stream, e.g. one per epoch. The stream seed is
    /// `mix(seed) ^ mix(stream + 1)` where `mix` is the SplitMix64 output
    /// function applied to a fresh state.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let a = SplitMix64::new(seed).next_u64();
        let b = SplitMix64::new(stream.wrapping_add(1)).next_u64();
        Self::new(a ^ b)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // 2^64 mod n, computed without overflow.
        let rem = (u64::MAX % n + 1) % n;
        let zone = u64::MAX - rem;
        loop {
            let x = self.next_u64();
            if rem == 0 || x <= zone {
                return x % n;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform float in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}
