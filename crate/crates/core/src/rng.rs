//! Counter-based, splittable random source.
//!
//! A [`RandomSource`] is a ChaCha8 stream keyed by a 64-bit seed. Child
//! sources are derived from the parent's key and a label only, so drawing
//! from a parent never perturbs its children. Parallel workers each take a
//! child by index and results stay reproducible regardless of scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Labels used to separate the major seed spaces.
pub mod labels {
    pub const TRAIN: u64 = 0x7472_6169_6e00_0001;
    pub const VALIDATION: u64 = 0x7661_6c69_6400_0002;
    pub const TEST: u64 = 0x7465_7374_0000_0003;
    pub const INIT: u64 = 0x696e_6974_0000_0004;
    pub const STEP: u64 = 0x7374_6570_0000_0005;
    pub const WEIGHTS: u64 = 0x7765_6967_6874_0006;
    pub const SHUFFLE: u64 = 0x7368_7566_666c_0007;
    pub const REAL: u64 = 0x7265_616c_0000_0008;
    pub const CANDIDATES: u64 = 0x6361_6e64_0000_0009;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic random stream identified by a 64-bit key.
#[derive(Clone, Debug)]
pub struct RandomSource {
    key: u64,
    inner: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        let key = splitmix64(seed);
        let mut bytes = [0u8; 32];
        let mut state = key;
        for chunk in bytes.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self {
            key,
            inner: ChaCha8Rng::from_seed(bytes),
        }
    }

    /// The key this stream was built from.
    pub fn key(&self) -> u64 {
        self.key
    }

    /// Independent child stream. Depends only on this source's key and
    /// `label`, never on how many values have been drawn.
    pub fn child(&self, label: u64) -> Self {
        Self::new(splitmix64(self.key ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    /// Child derived from a string label.
    pub fn child_named(&self, label: &str) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.child(h)
    }

    /// Child derived from a label path, e.g. `[STEP, t, candidate]`.
    pub fn derive(&self, path: &[u64]) -> Self {
        path.iter().fold(self.clone(), |r, &l| r.child(l))
    }

    /// Uniform on [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1), never exactly zero.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Lemire's multiply-shift; the bias is below 2^-32 for our sizes.
        ((u128::from(self.inner.next_u64()) * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
