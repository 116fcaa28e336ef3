//! Counter-based random substreams.
//!
//! Every path owns two independent ChaCha streams (noise and time draws)
//! addressed by `(seed, kind, path index)`, so a batch gives the same
//! numbers no matter how paths are spread across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Noise,
    Time,
    /// Auxiliary draws (certification, sampler checks).
    Aux,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Noise => 0x6e6f_6973_6500_0001,
            StreamKind::Time => 0x7469_6d65_0000_0002,
            StreamKind::Aux => 0x6175_7800_0000_0003,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one `(seed, kind, index)` triple.
pub fn substream(seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ kind.tag());
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut r1 = substream(42, StreamKind::Noise, 5);
        let mut r2 = substream(42, StreamKind::Noise, 5);
        let mut r3 = substream(42, StreamKind::Time, 5);
        let mut r4 = substream(42, StreamKind::Noise, 6);
        let x1: u64 = r1.random();
        assert_eq!(x1, r2.random::<u64>());
        assert_ne!(x1, r3.random::<u64>());
        assert_ne!(x1, r4.random::<u64>());
    }
}
