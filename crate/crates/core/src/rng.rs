//! Seeded random streams.
//!
//! Every stochastic routine takes `&mut Rng`; there is no global state. Child
//! streams for parallel work come from [`Rng::child`], which is keyed and does
//! not advance the parent, so the set of children is independent of the order
//! in which they are spawned.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer, used to derive seeds from keys.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a list of keys into a single seed.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix64(base), |acc, &k| mix64(acc ^ mix64(k)))
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `stream`. The parent state is
    /// untouched: `rng.child(k)` is a pure function of `(rng.seed(), k)`.
    pub fn child(&self, stream: u64) -> Rng {
        Rng::new(derive_seed(self.seed, &[stream]))
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open01(&mut self) -> f64 {
        loop {
            // 53 random mantissa bits, shifted by half an ulp so 0 is impossible.
            let u = ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
            if u < 1.0 {
                return u;
            }
        }
    }

    pub fn uniform_index(&mut self, n: usize) -> usize {
        use rand::Rng as _;
        self.inner.random_range(0..n)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn child_does_not_depend_on_parent_position() {
        let mut a = Rng::new(7);
        let c0 = a.child(3);
        for _ in 0..10 {
            a.next_u64();
        }
        let mut c1 = a.child(3);
        let mut c0 = c0;
        assert_eq!(c0.next_u64(), c1.next_u64());
        assert_ne!(a.child(3).next_u64(), a.child(4).next_u64());
    }

    #[test]
    fn open_uniform_stays_inside() {
        let mut r = Rng::new(1);
        for _ in 0..100_000 {
            let u = r.uniform_open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
