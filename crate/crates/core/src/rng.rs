//! Small deterministic PRNG for reproducible samplers and test points.
//!
//! SplitMix64: identical streams on every platform and toolchain, which keeps
//! verification reports byte-for-byte reproducible for a given seed.

use crate::C64;

#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: seed.wrapping_add(0x9e3779b97f4a7c15),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Complex number with both parts uniform in [lo, hi).
    pub fn complex_box(&mut self, lo: f64, hi: f64) -> C64 {
        let re = self.range(lo, hi);
        let im = self.range(lo, hi);
        C64::new(re, im)
    }

    /// Point `x + y*tau` with `x, y` uniform in [lo, hi).
    pub fn in_cell(&mut self, tau: C64, lo: f64, hi: f64) -> C64 {
        let x = self.range(lo, hi);
        let y = self.range(lo, hi);
        C64::new(x, 0.0) + tau * y
    }
}
