//! Deterministic, dependency-free randomness. Every random decision in the
//! workspace flows from an explicit seed through SplitMix64, so repeated runs
//! are bit-identical and sample generation is order-independent.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    #[inline]
    pub fn next_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform in 0..n via 128-bit multiply-shift (no modulo bias worth
    /// caring about at these ranges).
    #[inline]
    pub fn next_below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// Derive an independent stream seed from a base seed and a stream tag.
#[inline]
pub fn substream(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ tag.wrapping_mul(GOLDEN).wrapping_add(0x1234_5678_9ABC_DEF0))
}

/// Stateless per-cell hash used for seeded dropout; order-independent.
#[inline]
pub fn cell_hash(seed: u64, a: u64, b: u64) -> u64 {
    let mut s = mix64(seed ^ a.wrapping_mul(GOLDEN));
    s = mix64(s ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    s
}

/// Uniform in [0,1) from a single hash value.
#[inline]
pub fn hash_unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// FNV-1a 64-bit, used for name-keyed weight streams and config hashes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
