//! Reproducible per-path shock streams.
//!
//! Each simulated path owns an independent ChaCha stream addressed by
//! `(master_seed, path_index)`. Draws within a path are consumed in a fixed
//! step-major order, so path `k` produces identical shocks no matter how many
//! workers run or how paths are scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Source of i.i.d. standard normal 4-vectors for one path.
pub struct ShockStream {
    rng: ChaCha8Rng,
}

impl ShockStream {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(path_index);
        ShockStream { rng }
    }

    /// Four independent standard normals, one per risk factor.
    #[inline]
    pub fn next_quad(&mut self) -> [f64; 4] {
        [
            StandardNormal.sample(&mut self.rng),
            StandardNormal.sample(&mut self.rng),
            StandardNormal.sample(&mut self.rng),
            StandardNormal.sample(&mut self.rng),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_stream() {
        let mut a = ShockStream::new(42, 7);
        let mut b = ShockStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_quad(), b.next_quad());
        }
    }

    #[test]
    fn different_paths_decorrelated() {
        let mut a = ShockStream::new(42, 0);
        let mut b = ShockStream::new(42, 1);
        let first_a = a.next_quad();
        let first_b = b.next_quad();
        assert_ne!(first_a, first_b);
    }

    #[test]
    fn stream_independent_of_draw_order_across_paths() {
        // Path 5 drawn after exercising path 3 equals path 5 drawn fresh.
        let mut probe = ShockStream::new(9, 3);
        for _ in 0..17 {
            probe.next_quad();
        }
        let mut fresh = ShockStream::new(9, 5);
        let expected: Vec<[f64; 4]> = (0..8).map(|_| fresh.next_quad()).collect();
        let mut again = ShockStream::new(9, 5);
        let got: Vec<[f64; 4]> = (0..8).map(|_| again.next_quad()).collect();
        assert_eq!(expected, got);
    }
}
