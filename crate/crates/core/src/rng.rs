//! Seedable, splittable random streams.
//!
//! Every consumer of randomness derives its own stream from the master seed,
//! a purpose tag, and optional indices. Derivation is a pure function, so any
//! stream can be reconstructed from `(seed, tag, indices)` alone; nothing in
//! the crate depends on the order in which streams are consumed.

use alloc::vec::Vec;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Collapses `(seed, tag)` into a derived 64-bit seed.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    splitmix(master ^ fnv1a(tag.as_bytes()))
}

/// An independent random stream identified by `(seed, tag, indices)`.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(master: u64, tag: &str) -> Stream {
        Stream::indexed(master, tag, &[])
    }

    pub fn indexed(master: u64, tag: &str, indices: &[u64]) -> Stream {
        let mut state = derive_seed(master, tag);
        for &idx in indices {
            state = splitmix(state ^ idx.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        }
        Stream {
            rng: ChaCha8Rng::seed_from_u64(state),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw from `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`; rejection sampling keeps it unbiased.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal draw (Box-Muller).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Deterministic permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic() {
        let a: Vec<u64> = {
            let mut s = Stream::indexed(7, "x", &[1, 2]);
            (0..8).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = Stream::indexed(7, "x", &[1, 2]);
            (0..8).map(|_| s.next_u64()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn tags_and_indices_give_distinct_streams() {
        let mut a = Stream::new(7, "alpha");
        let mut b = Stream::new(7, "beta");
        let mut c = Stream::indexed(7, "alpha", &[1]);
        assert_ne!(a.next_u64(), b.next_u64());
        let mut a2 = Stream::new(7, "alpha");
        assert_ne!(a2.next_u64(), c.next_u64());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = Stream::new(0, "u");
        for _ in 0..10_000 {
            let x = s.uniform();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn below_is_in_range_and_covers() {
        let mut s = Stream::new(1, "b");
        let mut seen = [false; 7];
        for _ in 0..1000 {
            seen[s.below(7)] = true;
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut s = Stream::new(3, "p");
        let p = s.permutation(100);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn normal_moments() {
        let mut s = Stream::new(5, "n");
        let n = 100_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }
}
