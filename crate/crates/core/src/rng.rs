//! All randomness flows from one 64-bit seed. Named streams are carved out of
//! a counter-based generator (ChaCha8) so each consumer draws from its own
//! sequence: adding or removing draws in one module never shifts another
//! module's stream, which keeps runs comparable under config changes.
//!
//! Value conversion (uniform floats, Gaussians, index draws) is implemented
//! here directly on the raw 64-bit output so the draw sequences are pinned by
//! this crate alone.

use alloc::vec::Vec;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factory for named random streams, all derived from a single root seed.
#[derive(Debug, Clone, Copy)]
pub struct SeedTree {
    root: u64,
}

impl SeedTree {
    pub fn new(root: u64) -> Self {
        SeedTree { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Independent stream for `label`. The same (seed, label) pair always
    /// yields the same sequence.
    pub fn stream(&self, label: &str) -> StreamRng {
        self.stream_id(fnv1a(label.as_bytes(), FNV_OFFSET))
    }

    /// Indexed variant for families of streams (per episode, per run, ...).
    pub fn indexed(&self, label: &str, idx: u64) -> StreamRng {
        let h = fnv1a(label.as_bytes(), FNV_OFFSET);
        self.stream_id(fnv1a(&idx.to_le_bytes(), h))
    }

    fn stream_id(&self, id: u64) -> StreamRng {
        let mut state = self.root;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(id);
        StreamRng { inner }
    }
}

/// One named stream. Conversion helpers consume a fixed number of raw draws
/// per call so sequences stay stable.
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        lo + (hi - lo) * self.uniform()
    }

    pub fn uniform_vec(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|_| self.uniform_in(lo, hi)).collect()
    }

    /// Standard normal draw (Box-Muller, two uniforms per call).
    pub fn normal(&mut self) -> f64 {
        // 1 - u keeps the argument of ln strictly positive.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * math::PI * u2)
    }

    /// Unbiased index draw in [0, n) by rejection.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index draw from empty range");
        let n = n as u64;
        let bound = u64::MAX - u64::MAX % n;
        loop {
            let x = self.next_u64();
            if x < bound {
                return (x % n) as usize;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_independent() {
        let tree = SeedTree::new(7);
        let a: Vec<u64> = (0..8).map(|_| tree.stream("actor").next_u64()).collect();
        assert!(a.iter().all(|&v| v == a[0]), "fresh stream must restart");

        let mut s1 = tree.stream("actor");
        let mut s2 = tree.stream("actor");
        for _ in 0..32 {
            assert_eq!(s1.next_u64(), s2.next_u64());
        }
        let mut other = tree.stream("critic");
        let same: Vec<u64> = (0..32).map(|_| tree.stream("actor").next_u64()).collect();
        let diff: Vec<u64> = (0..32).map(|_| other.next_u64()).collect();
        assert_ne!(same, diff);
    }

    #[test]
    fn indexed_streams_differ_from_each_other() {
        let tree = SeedTree::new(3);
        let a = tree.indexed("episode", 0).next_u64();
        let b = tree.indexed("episode", 1).next_u64();
        assert_ne!(a, b);
    }

    #[test]
    fn uniform_stays_in_unit_interval() {
        let mut rng = SeedTree::new(11).stream("u");
        for _ in 0..10_000 {
            let v = rng.uniform();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = SeedTree::new(5).stream("n");
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn index_draw_is_roughly_uniform() {
        let mut rng = SeedTree::new(13).stream("idx");
        let n = 10usize;
        let draws = 100_000usize;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[rng.index(n)] += 1;
        }
        let expected = draws as f64 / n as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 9 degrees of freedom; 27.9 is the 0.1% tail.
        assert!(chi2 < 27.9, "chi2 {chi2}, counts {counts:?}");
    }
}
