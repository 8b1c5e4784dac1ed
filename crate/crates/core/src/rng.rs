//! Deterministic random streams.
//!
//! Every logical agent owns one stream keyed by `(seed, stream_id)`. The
//! generator is ChaCha8, which is counter based: a stream is addressed by a
//! 256-bit key derived from the seed plus a 64-bit stream selector, so the
//! numbers an agent sees never depend on how many draws other agents made or
//! on which thread ran them.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One agent's random stream.
#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

/// Builds the stream for `(seed, stream_id)`.
pub fn make_rng(seed: u64, stream_id: u64) -> StreamRng {
    let mut inner = ChaCha8Rng::seed_from_u64(seed);
    inner.set_stream(stream_id);
    StreamRng { inner }
}

impl StreamRng {
    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.inner.random_range(0..n)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Streams for a whole population: stream `i` belongs to agent `i`.
pub fn agent_streams(seed: u64, n_agents: usize) -> Vec<StreamRng> {
    (0..n_agents as u64).map(|i| make_rng(seed, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prefix(seed: u64, stream: u64) -> Vec<u64> {
        let mut rng = make_rng(seed, stream);
        (0..64).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn same_key_same_sequence() {
        assert_eq!(prefix(7, 0), prefix(7, 0));
    }

    #[test]
    fn streams_differ() {
        let a = prefix(7, 0);
        let b = prefix(7, 1);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn seeds_differ() {
        let a = prefix(7, 0);
        let b = prefix(8, 0);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn unit_interval() {
        let mut rng = make_rng(1, 2);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }
}
