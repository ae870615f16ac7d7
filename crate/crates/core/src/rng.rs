//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream. Keys are derived by hashing a path
//! of integers (seed, design, G, replication, ...) with SHA-256, and
//! bootstrap draws select a ChaCha stream id inside that key. A draw's
//! randomness is therefore a pure function of its path, independent of the
//! order in which replications or draws are executed.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Seed used when none is supplied.
pub const DEFAULT_SEED: u64 = 20_240_611;

/// Position in the stream tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        Self::hash(b"ce-root", &seed.to_le_bytes())
    }

    fn hash(prefix: &[u8], payload: &[u8]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(prefix);
        hasher.update(payload);
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self(key)
    }

    /// Derives the child key labelled `tag`.
    pub fn child(&self, tag: u64) -> Self {
        let mut payload = [0u8; 40];
        payload[..32].copy_from_slice(&self.0);
        payload[32..].copy_from_slice(&tag.to_le_bytes());
        Self::hash(b"ce-child", &payload)
    }

    /// Derives a child from a sequence of tags.
    pub fn path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(*self, |k, &t| k.child(t))
    }

    /// Generator for the key's main stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.0)
    }

    /// Generator for draw `index` (a separate ChaCha stream under this key).
    pub fn draw_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.0);
        rng.set_stream(index.wrapping_add(1));
        rng
    }
}

/// Uniform on [0, 1) from the top 53 bits of one 64-bit word.
#[inline]
pub fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on [lo, hi).
#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform01(rng)
}

/// Exponential(1) by inversion, `-ln(1 - U)`.
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - uniform01(rng)).ln()
}

/// Demeaned unit-variance exponential, `E - 1`.
#[inline]
pub fn demeaned_exponential<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    exponential(rng) - 1.0
}

/// Rademacher sign from the top bit of one 64-bit word.
#[inline]
pub fn rademacher<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    if rng.next_u64() >> 63 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Uniform index in `0..n`.
#[inline]
pub fn index_below<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = index_below(rng, i + 1);
        out.swap(i, j);
    }
    out
}
