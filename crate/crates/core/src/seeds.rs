//! Seed derivation.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] seeded from a 64-bit
//! value. Child seeds are derived from a master seed by folding a path of
//! 64-bit words through the SplitMix64 finalizer:
//!
//! ```text
//! h0 = splitmix64(master)
//! h(k+1) = splitmix64(h(k) ^ word(k))
//! ```
//!
//! The first word of every path is a [`Stream`] tag, so streams for different
//! purposes (scenario sampling, network initialization, exploration, replay
//! sampling, the random baseline) never coincide. The remaining words are
//! indices such as the run number or the `(m, n)` pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Scenario = 0x5343_454e,
    Shadowing = 0x5348_4144,
    AgentInit = 0x494e_4954,
    Exploration = 0x4550_5347,
    Replay = 0x5245_504c,
    RandomScheme = 0x524e_4453,
    Run = 0x5255_4e53,
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ stream as u64);
    for &w in path {
        h = splitmix64(h ^ w);
    }
    h
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, stream: Stream, path: &[u64]) -> ChaCha8Rng {
    rng(derive(master, stream, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn splitmix_reference_values() {
        // first output of the reference generator seeded with 0
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn streams_are_distinct() {
        let a = derive(7, Stream::AgentInit, &[1, 2]);
        let b = derive(7, Stream::Exploration, &[1, 2]);
        let c = derive(7, Stream::AgentInit, &[2, 1]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive(7, Stream::AgentInit, &[1, 2]));
    }

    #[test]
    fn rng_is_reproducible() {
        let mut r1 = stream_rng(42, Stream::Scenario, &[0]);
        let mut r2 = stream_rng(42, Stream::Scenario, &[0]);
        let a: Vec<u64> = (0..8).map(|_| r1.random()).collect();
        let b: Vec<u64> = (0..8).map(|_| r2.random()).collect();
        assert_eq!(a, b);
    }
}
