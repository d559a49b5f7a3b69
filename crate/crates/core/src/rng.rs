//! Counter-based deterministic random streams.
//!
//! Every draw is a pure function of `(seed, stream, index)`, so each node owns
//! an independent stream and adding work to one node never shifts the draws
//! seen by another. The mixing function is SplitMix64's finalizer applied in
//! three rounds; changing it changes every golden log.

use rand_core::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The raw keyed draw.
pub fn draw(seed: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(seed) ^ stream) ^ index)
}

/// A random stream keyed by `(seed, stream)`; `index` counts draws taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRng {
    seed: u64,
    stream: u64,
    index: u64,
}

impl StreamRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            seed,
            stream,
            index: 0,
        }
    }

    /// Number of 64-bit draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.index
    }

    /// Uniform integer in `[0, 2^bits - 1]`.
    pub fn bits(&mut self, bits: u32) -> u64 {
        let v = self.next_u64();
        if bits >= 64 {
            v
        } else {
            v & ((1u64 << bits) - 1)
        }
    }

    /// Uniform real in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let v = draw(self.seed, self.stream, self.index);
        self.index += 1;
        v
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }
}
