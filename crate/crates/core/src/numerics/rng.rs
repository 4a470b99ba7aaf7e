//! Counter-based, splittable random number generation.
//!
//! The generator is SplitMix64 (Steele, Lea & Flood, 2014) used in counter
//! mode: the `n`-th output of a stream is `mix64(key + n * GOLDEN_GAMMA)`,
//! where `key` is derived from `(seed, stream_id)`. Output `n` therefore
//! depends only on the key and the counter, so any substream can be
//! reconstructed without replaying its siblings. `split` derives a child key
//! by hashing the parent's key, counter and a caller-chosen label.
//!
//! All arithmetic is wrapping 64-bit integer arithmetic, so sequences are
//! bit-identical on every platform.

use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const STREAM_GAMMA: u64 = 0xd1b5_4a32_d192_ed03;
const SPLIT_GAMMA: u64 = 0x8cb9_2ba7_2f3d_8dd7;

/// SplitMix64 finalizer (variant 13 of Stafford's mixers).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a string label into a 64-bit value for [`Rng::split_named`].
pub fn label_hash(label: &str) -> u64 {
    // FNV-1a, then mixed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    key: u64,
    counter: u64,
    stream_id: u64,
}

impl Rng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let key = mix64(mix64(seed) ^ stream_id.wrapping_mul(STREAM_GAMMA).wrapping_add(GOLDEN_GAMMA));
        Self {
            key,
            counter: 0,
            stream_id,
        }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(seed, 0)
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 64-bit words drawn so far.
    pub fn position(&self) -> u64 {
        self.counter
    }

    /// Derives an independent child generator. Deterministic in the parent's
    /// current state and `label`; the parent is not advanced.
    pub fn split(&self, label: u64) -> Rng {
        let tweak = mix64(label.wrapping_mul(SPLIT_GAMMA) ^ self.counter.wrapping_mul(GOLDEN_GAMMA));
        Rng {
            key: mix64(self.key ^ tweak).wrapping_add(STREAM_GAMMA),
            counter: 0,
            stream_id: label,
        }
    }

    pub fn split_named(&self, label: &str) -> Rng {
        self.split(label_hash(label))
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        let z = self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA));
        self.counter = self.counter.wrapping_add(1);
        mix64(z)
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_word() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        (self.next_word() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_word()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_word().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// `n` iid standard-normal draws.
pub fn gaussian_sample(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}
